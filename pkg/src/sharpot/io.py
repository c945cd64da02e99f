"""Reading and writing histograms, matrices, model files and SVG charts.

Text format: UTF-8 CSV, one row per line, comma-separated decimals, no
header.  A histogram is a single line.  JSON files with the fields
``weights`` (histogram) or ``entries``/``n``/``m`` (matrix) are read
interchangeably; the format is chosen by the ``.json`` suffix.
"""

import json
import struct
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .exceptions import InvalidInputError, SharpOTError

MODEL_MAGIC = b"SHARPOT-MODEL-1\n"
FLOAT_FORMAT = "%.12g"


class FileFormatError(SharpOTError, OSError):
    """A file could not be parsed or does not follow the expected layout."""


def _is_json(path):
    return Path(path).suffix.lower() == ".json"


def _parse_csv(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FileFormatError(f"{path}: not UTF-8 text") from exc
    rows = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(tok) for tok in line.split(",")])
        except ValueError as exc:
            raise FileFormatError(f"{path}:{lineno}: {exc}") from exc
    if not rows:
        raise FileFormatError(f"{path}: no data rows")
    if len({len(r) for r in rows}) != 1:
        raise FileFormatError(f"{path}: rows have different lengths")
    return np.array(rows, dtype=float)


def _parse_json(path):
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: {exc}") from exc
    if not isinstance(obj, dict):
        raise FileFormatError(f"{path}: expected a JSON object")
    if "weights" in obj:
        return np.atleast_2d(np.asarray(obj["weights"], dtype=float))
    if "entries" in obj:
        A = np.asarray(obj["entries"], dtype=float)
        n, m = obj.get("n"), obj.get("m")
        if A.ndim == 1 and n is not None and m is not None and A.size == n * m:
            A = A.reshape(n, m)
        if A.ndim != 2 or (n is not None and A.shape[0] != n) or (m is not None and A.shape[1] != m):
            raise FileFormatError(f"{path}: entries do not match n={n}, m={m}")
        return A
    raise FileFormatError(f"{path}: expected a 'weights' or 'entries' field")


def read_matrix(path):
    """Read a 2-D array from CSV or JSON."""
    return _parse_json(path) if _is_json(path) else _parse_csv(path)


def read_histogram(path):
    """Read a single histogram (one line, or a JSON ``weights`` list)."""
    A = read_matrix(path)
    if A.shape[0] != 1:
        raise FileFormatError(f"{path}: expected one histogram, found {A.shape[0]} rows")
    return A[0]


def read_histograms(path):
    """Read one histogram per line."""
    return read_matrix(path)


def format_row(values):
    return ",".join(FLOAT_FORMAT % v for v in np.asarray(values, dtype=float).ravel())


def write_matrix(path, A):
    """Write a 1-D or 2-D array as CSV (12 significant digits) or JSON."""
    A = np.asarray(A, dtype=float)
    if _is_json(path):
        if A.ndim == 1:
            obj = {"weights": A.tolist(), "n": int(A.size)}
        else:
            obj = {"entries": A.tolist(), "n": int(A.shape[0]), "m": int(A.shape[1])}
        Path(path).write_text(json.dumps(obj) + "\n", encoding="utf-8")
        return
    lines = [format_row(row) for row in np.atleast_2d(A)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


write_histogram = write_matrix


def write_records(path, header, rows):
    """CSV with a header line; used for study and trace outputs."""
    def cell(v):
        if isinstance(v, str):
            return v
        if isinstance(v, (bool, int, np.integer)):
            return str(int(v))
        return FLOAT_FORMAT % v

    lines = [",".join(header)] + [",".join(cell(v) for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# model files ---------------------------------------------------------------


def save_model(path, model):
    """Write a fitted :class:`~sharpot.learning.SinkhornRegressor`.

    Layout: the magic line ``SHARPOT-MODEL-1``, an unsigned 64-bit
    little-endian header length, a UTF-8 JSON header, then little-endian
    float64 arrays in header order (training inputs, training outputs,
    lower Cholesky factor of ``K + gamma l I``, ground cost).
    """
    wm = model.weight_model_
    arrays = {"inputs": wm.X_fit_, "outputs": model.outputs_, "cholesky": wm.cholesky_, "cost": model.cost_}
    header = {
        "format": "SHARPOT-MODEL-1",
        "sigma": float(model.sigma),
        "gamma": float(model.gamma),
        "metric": model.metric,
        "lambda": float(model.lam),
        "epsilon": None if model.epsilon is None else float(model.epsilon),
        "max_iter": int(model.max_iter),
        "grad_tol": float(model.grad_tol),
        "marginal_tol": float(model.marginal_tol),
        "arrays": [{"name": k, "shape": list(v.shape)} for k, v in arrays.items()],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        for v in arrays.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_model(path):
    """Inverse of :func:`save_model`."""
    from .learning import SinkhornRegressor, WeightModel

    data = Path(path).read_bytes()
    if not data.startswith(MODEL_MAGIC):
        raise FileFormatError(f"{path}: not a SHARPOT-MODEL-1 file")
    pos = len(MODEL_MAGIC)
    if len(data) < pos + 8:
        raise FileFormatError(f"{path}: truncated header")
    (hlen,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    try:
        header = json.loads(data[pos : pos + hlen].decode("utf-8"))
        missing = {"sigma", "gamma", "metric", "lambda", "epsilon", "max_iter", "grad_tol", "marginal_tol", "arrays"} - set(header)
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError) as exc:
        raise FileFormatError(f"{path}: bad header") from exc
    if missing:
        raise FileFormatError(f"{path}: header lacks {sorted(missing)}")
    pos += hlen
    arrays = {}
    if {a.get("name") for a in header["arrays"]} != {"inputs", "outputs", "cholesky", "cost"}:
        raise FileFormatError(f"{path}: unexpected array list")
    for spec in header["arrays"]:
        count = int(np.prod(spec["shape"]))
        if len(data) < pos + 8 * count:
            raise FileFormatError(f"{path}: truncated payload")
        arrays[spec["name"]] = np.frombuffer(data, dtype="<f8", count=count, offset=pos).reshape(spec["shape"]).astype(float)
        pos += 8 * count
    model = SinkhornRegressor(
        sigma=header["sigma"],
        gamma=header["gamma"],
        metric=header["metric"],
        lam=header["lambda"],
        epsilon=header["epsilon"],
        max_iter=header["max_iter"],
        grad_tol=header["grad_tol"],
        marginal_tol=header["marginal_tol"],
    )
    wm = WeightModel(sigma=header["sigma"], gamma=header["gamma"])
    wm.X_fit_ = arrays["inputs"]
    wm.cholesky_ = arrays["cholesky"]
    wm.n_features_in_ = wm.X_fit_.shape[1]
    model.weight_model_ = wm
    model.outputs_ = arrays["outputs"]
    model.cost_ = arrays["cost"]
    model.n_features_in_ = wm.n_features_in_
    return model


# SVG -----------------------------------------------------------------------

WIDTH, HEIGHT = 800, 400
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def _num(x):
    return f"{x:.2f}"


def _bar_panel(histograms, labels, x0, y0, w, h, title=None):
    """SVG elements for one grouped-bar panel inside the box ``(x0, y0, w, h)``."""
    H = np.atleast_2d(np.asarray(histograms, dtype=float))
    k, n = H.shape
    top = 34 if title else 14
    per_line = max(1, int((w - 50) // 120))
    legend_h = 16 * -(-k // per_line)
    plot_x, plot_y = x0 + 40, y0 + top
    plot_w, plot_h = w - 50, max(h - top - 20 - legend_h, 40)
    vmax = float(H.max()) if H.max() > 0 else 1.0
    slot = plot_w / n
    bar_w = 0.8 * slot / k
    out = []
    if title:
        out.append(f'<text x="{_num(x0 + w / 2)}" y="{_num(y0 + 20)}" text-anchor="middle" font-size="14">{escape(title)}</text>')
    out.append(
        f'<line x1="{_num(plot_x)}" y1="{_num(plot_y + plot_h)}" x2="{_num(plot_x + plot_w)}" '
        f'y2="{_num(plot_y + plot_h)}" stroke="#000" stroke-width="1"/>'
    )
    out.append(f'<text x="{_num(plot_x - 4)}" y="{_num(plot_y + 4)}" text-anchor="end" font-size="10">{vmax:.3g}</text>')
    for r in range(k):
        color = PALETTE[r % len(PALETTE)]
        for i in range(n):
            bh = plot_h * H[r, i] / vmax
            bx = plot_x + i * slot + 0.1 * slot + r * bar_w
            out.append(
                f'<rect x="{_num(bx)}" y="{_num(plot_y + plot_h - bh)}" width="{_num(bar_w)}" '
                f'height="{_num(bh)}" fill="{color}"/>'
            )
        lx = plot_x + 120 * (r % per_line)
        ly = plot_y + plot_h + 20 + 16 * (r // per_line)
        out.append(f'<rect x="{_num(lx)}" y="{_num(ly - 9)}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{_num(lx + 14)}" y="{_num(ly)}" font-size="11">{escape(str(labels[r]))}</text>')
    return out


def _write_svg(path, elements):
    body = "\n".join(elements)
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#fff"/>\n{body}\n</svg>\n'
    )
    Path(path).write_text(svg, encoding="utf-8")


def _check_group(histograms, labels):
    if len(histograms) == 0:
        raise InvalidInputError("no histograms to plot")
    sizes = {np.asarray(h).size for h in histograms}
    if len(sizes) != 1:
        raise InvalidInputError("histograms must share one length")
    if labels is None:
        labels = [f"h{i}" for i in range(len(histograms))]
    if len(labels) != len(histograms):
        raise InvalidInputError("one label per histogram is required")
    return labels


def emit_svg_bars(histograms, labels, path, title=None):
    """Grouped bar chart on a fixed 800x400 canvas.

    Output is byte-identical for identical inputs.  Nothing is written
    when the input is invalid.
    """
    labels = _check_group(histograms, labels)
    _write_svg(path, _bar_panel(histograms, labels, 0, 0, WIDTH, HEIGHT, title))


def emit_svg_panels(panels, path):
    """Side-by-side bar panels; ``panels`` is a list of ``(title, histograms, labels)``."""
    if not panels:
        raise InvalidInputError("no panels to plot")
    checked = [(t, hs, _check_group(hs, ls)) for t, hs, ls in panels]
    w = WIDTH / len(checked)
    elements = []
    for p, (title, hs, ls) in enumerate(checked):
        elements.extend(_bar_panel(hs, ls, p * w, 0, w, HEIGHT, title))
    _write_svg(path, elements)
