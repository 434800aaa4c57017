"""Tiny dependency-free SVG plotting: line charts and heatmaps.

Just enough for diagnostics output — axes, ticks, a legend, optional log
scales (non-positive points are dropped), and a color-mapped cell grid with
a labeled colorbar. Files are standalone SVG 1.1.
"""

import numpy as np

_W, _H = 640, 420
_ML, _MR, _MT, _MB = 72, 24, 42, 52
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

# dark-blue -> teal -> yellow stops, linearly interpolated
_CMAP = np.array(
    [[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]],
    dtype=np.float64,
)


def _esc(text):
    return (
        str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
    )


def _fmt(value):
    return "%.6g" % value


def _ticks(lo, hi, count=5):
    if lo == hi:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


def _frame(parts, title, xlabel, ylabel):
    parts.append(
        '<rect x="%d" y="%d" width="%d" height="%d" fill="none" stroke="#333"/>'
        % (_ML, _MT, _W - _ML - _MR, _H - _MT - _MB)
    )
    if title:
        parts.append(
            '<text x="%d" y="24" text-anchor="middle" font-size="15">%s</text>'
            % (_W // 2, _esc(title))
        )
    if xlabel:
        parts.append(
            '<text x="%d" y="%d" text-anchor="middle" font-size="12">%s</text>'
            % ((_ML + _W - _MR) // 2, _H - 12, _esc(xlabel))
        )
    if ylabel:
        parts.append(
            '<text x="16" y="%d" text-anchor="middle" font-size="12" '
            'transform="rotate(-90 16 %d)">%s</text>'
            % ((_MT + _H - _MB) // 2, (_MT + _H - _MB) // 2, _esc(ylabel))
        )


def _write(path, parts):
    body = "\n".join(parts)
    svg = (
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
        'font-family="sans-serif">\n%s\n</svg>\n' % (_W, _H, body)
    )
    with open(path, "w") as fh:
        fh.write(svg)


def line_chart(path, curves, title="", xlabel="", ylabel="", logx=False, logy=False):
    """curves: iterable of (label, xs, ys). Non-finite points are skipped."""
    cleaned = []
    for label, xs, ys in curves:
        xs = np.asarray(xs, dtype=np.float64)
        ys = np.asarray(ys, dtype=np.float64)
        keep = np.isfinite(xs) & np.isfinite(ys)
        if logx:
            keep &= xs > 0
        if logy:
            keep &= ys > 0
        xs, ys = xs[keep], ys[keep]
        if logx:
            xs = np.log10(xs)
        if logy:
            ys = np.log10(ys)
        cleaned.append((label, xs, ys))
    allx = np.concatenate([c[1] for c in cleaned if len(c[1])] or [np.array([0.0, 1.0])])
    ally = np.concatenate([c[2] for c in cleaned if len(c[2])] or [np.array([0.0, 1.0])])
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x0 == x1:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y0 == y1:
        y0, y1 = y0 - 0.5, y1 + 0.5
    pad = 0.04 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad

    def px(x):
        return _ML + (x - x0) / (x1 - x0) * (_W - _ML - _MR)

    def py(y):
        return _H - _MB - (y - y0) / (y1 - y0) * (_H - _MT - _MB)

    parts = []
    for tick in _ticks(x0, x1):
        label = 10.0**tick if logx else tick
        parts.append(
            '<line x1="%.1f" y1="%d" x2="%.1f" y2="%d" stroke="#999"/>'
            % (px(tick), _H - _MB, px(tick), _H - _MB + 5)
        )
        parts.append(
            '<text x="%.1f" y="%d" text-anchor="middle" font-size="11">%s</text>'
            % (px(tick), _H - _MB + 18, _fmt(label))
        )
    for tick in _ticks(y0, y1):
        label = 10.0**tick if logy else tick
        parts.append(
            '<line x1="%d" y1="%.1f" x2="%d" y2="%.1f" stroke="#999"/>'
            % (_ML - 5, py(tick), _ML, py(tick))
        )
        parts.append(
            '<text x="%d" y="%.1f" text-anchor="end" font-size="11">%s</text>'
            % (_ML - 8, py(tick) + 4, _fmt(label))
        )
    for i, (label, xs, ys) in enumerate(cleaned):
        color = _COLORS[i % len(_COLORS)]
        if len(xs):
            points = " ".join("%.2f,%.2f" % (px(x), py(y)) for x, y in zip(xs, ys))
            parts.append(
                '<polyline points="%s" fill="none" stroke="%s" stroke-width="1.5"/>'
                % (points, color)
            )
        if label:
            ly = _MT + 16 + 16 * i
            parts.append(
                '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="%s" stroke-width="2"/>'
                % (_W - _MR - 150, ly - 4, _W - _MR - 126, ly - 4, color)
            )
            parts.append(
                '<text x="%d" y="%d" font-size="11">%s</text>'
                % (_W - _MR - 120, ly, _esc(label))
            )
    _frame(parts, title, xlabel, ylabel)
    _write(path, parts)


def _color(value):
    pos = value * (len(_CMAP) - 1)
    i = min(int(pos), len(_CMAP) - 2)
    frac = pos - i
    rgb = _CMAP[i] * (1 - frac) + _CMAP[i + 1] * frac
    return "#%02x%02x%02x" % tuple(int(round(c)) for c in rgb)


def heatmap(path, grid, extent, title="", xlabel="", ylabel=""):
    """grid[i, j] drawn with axis 0 along x and axis 1 along y (origin lower).

    extent: (x0, x1, y0, y1) data coordinates of the grid edges.
    """
    grid = np.asarray(grid, dtype=np.float64)
    x0, x1, y0, y1 = (float(e) for e in extent)
    finite = grid[np.isfinite(grid)]
    lo = float(finite.min()) if finite.size else 0.0
    hi = float(finite.max()) if finite.size else 1.0
    if lo == hi:
        hi = lo + 1.0
    plot_w = _W - _ML - _MR - 60  # leave room for the colorbar
    plot_h = _H - _MT - _MB
    nx, ny = grid.shape
    cw, ch = plot_w / nx, plot_h / ny
    parts = []
    for i in range(nx):
        for j in range(ny):
            val = grid[i, j]
            if not np.isfinite(val):
                continue
            frac = (val - lo) / (hi - lo)
            parts.append(
                '<rect x="%.2f" y="%.2f" width="%.2f" height="%.2f" fill="%s"/>'
                % (_ML + i * cw, _H - _MB - (j + 1) * ch, cw + 0.5, ch + 0.5,
                   _color(frac))
            )
    for frac, x in ((0.0, x0), (0.5, 0.5 * (x0 + x1)), (1.0, x1)):
        parts.append(
            '<text x="%.1f" y="%d" text-anchor="middle" font-size="11">%s</text>'
            % (_ML + frac * plot_w, _H - _MB + 18, _fmt(x))
        )
    for frac, y in ((0.0, y0), (0.5, 0.5 * (y0 + y1)), (1.0, y1)):
        parts.append(
            '<text x="%d" y="%.1f" text-anchor="end" font-size="11">%s</text>'
            % (_ML - 8, _H - _MB - frac * plot_h + 4, _fmt(y))
        )
    bar_x = _ML + plot_w + 20
    for step in range(40):
        frac = step / 39.0
        parts.append(
            '<rect x="%d" y="%.2f" width="16" height="%.2f" fill="%s"/>'
            % (bar_x, _H - _MB - (step + 1) * plot_h / 40.0, plot_h / 40.0 + 0.5,
               _color(frac))
        )
    parts.append(
        '<text x="%d" y="%d" font-size="10">%s</text>'
        % (bar_x + 20, _H - _MB, _fmt(lo))
    )
    parts.append(
        '<text x="%d" y="%d" font-size="10">%s</text>'
        % (bar_x + 20, _MT + 10, _fmt(hi))
    )
    parts.append(
        '<rect x="%d" y="%d" width="%.1f" height="%d" fill="none" stroke="#333"/>'
        % (_ML, _MT, plot_w, plot_h)
    )
    if title:
        parts.append(
            '<text x="%d" y="24" text-anchor="middle" font-size="15">%s</text>'
            % (_W // 2, _esc(title))
        )
    if xlabel:
        parts.append(
            '<text x="%.1f" y="%d" text-anchor="middle" font-size="12">%s</text>'
            % (_ML + plot_w / 2, _H - 12, _esc(xlabel))
        )
    if ylabel:
        parts.append(
            '<text x="16" y="%d" text-anchor="middle" font-size="12" '
            'transform="rotate(-90 16 %d)">%s</text>'
            % ((_MT + _H - _MB) // 2, (_MT + _H - _MB) // 2, _esc(ylabel))
        )
    _write(path, parts)
