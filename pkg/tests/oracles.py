"""Slow scalar reference implementations used as independent test oracles.

Nothing here imports the package's numeric code; each routine is a direct
loop over the defining formula.
"""

import math

from shapely.geometry import Point, Polygon


def softmax_list(xs):
    mx = max(xs)
    e = [math.exp(x - mx) for x in xs]
    s = sum(e)
    return [v / s for v in e]


def cosine_matrix(rows, eps=1e-8):
    c = len(rows)
    out = [[0.0] * c for _ in range(c)]
    for i in range(c):
        for j in range(c):
            if i == j:
                continue
            dot = sum(a * b for a, b in zip(rows[i], rows[j]))
            ni = math.sqrt(sum(a * a for a in rows[i]))
            nj = math.sqrt(sum(b * b for b in rows[j]))
            out[i][j] = dot / (ni * nj + eps)
    return out


def biased_weights(logits, X, kappa):
    """logits: c lists of n; returns c lists of n."""
    c, n = len(logits), len(logits[0])
    out = [[0.0] * n for _ in range(c)]
    for i in range(c):
        for p in range(n):
            col = [logits[j][p] + (0.0 if j == i else kappa * X[i][j]) for j in range(c)]
            out[i][p] = softmax_list(col)[i]
    return out


def pooled_keys(feat, weights, norm="l1", eps=1e-8):
    """feat: m lists of n; weights: c lists of n; returns m x c nested list."""
    m, c, n = len(feat), len(weights), len(feat[0])
    out = [[0.0] * c for _ in range(m)]
    for i in range(c):
        if norm == "l1":
            d = sum(weights[i])
        else:
            d = math.sqrt(sum(w * w for w in weights[i]))
        for k in range(m):
            out[k][i] = sum(feat[k][p] * weights[i][p] for p in range(n)) / (d + eps)
    return out


def attention(v, feat):
    m, c, n = len(v), len(v[0]), len(feat[0])
    out = [[0.0] * n for _ in range(c)]
    for p in range(n):
        scores = [sum(v[k][i] * feat[k][p] for k in range(m)) for i in range(c)]
        probs = softmax_list(scores)
        for i in range(c):
            out[i][p] = probs[i]
    return out


def weighted_ce(pred, labels, weights, is_probs, floor=1e-7):
    """pred: c lists of n; labels: n ints; weights: n floats."""
    num = den = 0.0
    for p in range(len(labels)):
        col = [pred[i][p] for i in range(len(pred))]
        if is_probs:
            q = min(max(col[labels[p]], floor), 1.0)
        else:
            q = softmax_list(col)[labels[p]]
        num += weights[p] * -math.log(q)
        den += weights[p]
    return 0.0 if den == 0 else num / den


def chebyshev_band(mask, r):
    """Pixels with a pixel of the other label within Chebyshev distance r."""
    h, w = len(mask), len(mask[0])
    out = [[False] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            for yy in range(max(0, y - r), min(h, y + r + 1)):
                if out[y][x]:
                    break
                for xx in range(max(0, x - r), min(w, x + r + 1)):
                    if mask[yy][xx] != mask[y][x]:
                        out[y][x] = True
                        break
    return out


def pixel_counts(pred, gt, ignore):
    tp = fp = fn = 0
    for prow, grow, irow in zip(pred, gt, ignore):
        for p, g, i in zip(prow, grow, irow):
            if i:
                continue
            if p and g:
                tp += 1
            elif p:
                fp += 1
            elif g:
                fn += 1
    return tp, fp, fn


def raster_quad(verts, h, w):
    poly = Polygon(verts)
    return [[poly.covers(Point(c + 0.5, r + 0.5)) for c in range(w)] for r in range(h)]


def bilinear_at(img, x, y):
    """Value at continuous (x, y) with pixel (r, c) centred at (c + .5, r + .5); border clamped."""
    h, w = len(img), len(img[0])
    fx = min(max(x - 0.5, 0.0), w - 1.0)
    fy = min(max(y - 0.5, 0.0), h - 1.0)
    x0, y0 = int(math.floor(fx)), int(math.floor(fy))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    ax, ay = fx - x0, fy - y0
    top = img[y0][x0] * (1 - ax) + img[y0][x1] * ax
    bot = img[y1][x0] * (1 - ax) + img[y1][x1] * ax
    return top * (1 - ay) + bot * ay


def crop_resize(img, rect, size):
    x0, y0, x1, y1 = rect
    return [[bilinear_at(img, x0 + (k + 0.5) * (x1 - x0) / size, y0 + (j + 0.5) * (y1 - y0) / size)
             for k in range(size)] for j in range(size)]


def central_difference(f, x, h=1e-6):
    """Numerical gradient of scalar ``f`` at numpy array ``x`` (any shape)."""
    x = x.astype("float64")
    g = x.copy()
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f(x)
        flat[i] = old - h
        fm = f(x)
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return g


def relative_error(a, b):
    num = math.sqrt(sum((p - q) ** 2 for p, q in zip(a, b)))
    den = max(math.sqrt(sum(p * p for p in a)), math.sqrt(sum(q * q for q in b)), 1e-12)
    return num / den
