"""Shared brute-force oracles and synthetic scene builders for the tests.

Oracles here are deliberately independent of the library's optimized
paths: plain loops, 64-bit accumulation, no shared code.
"""

import numpy as np

from handpose import rand
from handpose.imaging import Image


# ------------------------------------------------------------- NN oracles


def naive_conv2d(x, w, b):
    """Direct 6-loop valid cross-correlation, float64 accumulation."""
    c_in, h, wd = x.shape
    c_out, _, kh, kw = w.shape
    oh, ow = h - kh + 1, wd - kw + 1
    out = np.zeros((c_out, oh, ow), dtype=np.float64)
    for o in range(c_out):
        for y in range(oh):
            for xx in range(ow):
                acc = float(b[o])
                for c in range(c_in):
                    for dy in range(kh):
                        for dx in range(kw):
                            acc += float(x[c, y + dy, xx + dx]) * float(w[o, c, dy, dx])
                out[o, y, xx] = acc
    return out


def finite_diff(f, x, eps=1e-3):
    """Central finite differences of scalar f w.r.t. array x (float64)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f()
        flat[i] = orig - eps
        fm = f()
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * eps)
    return g


def max_rel_error(analytic, numeric):
    denom = np.maximum(np.abs(analytic) + np.abs(numeric), 1e-8)
    return float(np.max(np.abs(analytic - numeric) / denom))


# ------------------------------------------------------ imaging oracles


def brute_rect_sum(pixels, x, y, w, h):
    total = 0
    for yy in range(y, y + h):
        for xx in range(x, x + w):
            total += int(pixels[yy, xx])
    return total


def flood_fill_components(bits, connectivity=8):
    """Independent BFS labeling; returns list of sets of (y, x) points."""
    if connectivity == 4:
        offs = ((-1, 0), (1, 0), (0, -1), (0, 1))
    else:
        offs = tuple((dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0))
    h, w = bits.shape
    seen = np.zeros_like(bits, dtype=bool)
    comps = []
    for y in range(h):
        for x in range(w):
            if bits[y, x] and not seen[y, x]:
                queue = [(y, x)]
                seen[y, x] = True
                pts = set()
                while queue:
                    cy, cx = queue.pop()
                    pts.add((cy, cx))
                    for dy, dx in offs:
                        ny, nx = cy + dy, cx + dx
                        if 0 <= ny < h and 0 <= nx < w and bits[ny, nx] and not seen[ny, nx]:
                            seen[ny, nx] = True
                            queue.append((ny, nx))
                comps.append(pts)
    return comps


def nearest_rank_oracle(samples, q):
    """Percentile by explicit sort-and-index."""
    ordered = sorted(samples)
    rank = max(1, int(np.ceil(q * len(ordered))))
    return ordered[rank - 1]


# -------------------------------------------------------- synthetic data


SKIN_BASE = np.array([200, 120, 100])
BG_COLOR = np.array([40, 60, 200])


def skin_texture(side=36, jitter=20, seed=77):
    """Seeded textured skin-colored patch, uint8 HxWx3."""
    rng = rand.generator(seed, 0)
    noise = rng.integers(-jitter, jitter + 1, size=(side, side, 3))
    return np.clip(SKIN_BASE[None, None] + noise, 0, 255).astype(np.uint8)


def scene_frame(patch, px, py, width=160, height=120):
    """RGB frame: flat non-skin background with the patch at (px, py)."""
    frame = np.tile(BG_COLOR.astype(np.uint8), (height, width, 1))
    side = patch.shape[0]
    frame[py : py + side, px : px + side] = patch
    return Image(frame)


def shape_dataset_arrays(samples_per_class=300, seed=42, noise=0.08):
    """10 distinguishable 48x48 binary shape classes with jitter.

    Classes: filled disc, ring, solid square, hollow square, cross,
    X diagonal stripes, horizontal bars, vertical bars, triangle, checker.
    Returns masks (N, 48, 48) bool and labels (N,).
    """
    rng = rand.generator(seed, 9)
    yy, xx = np.mgrid[0:48, 0:48]
    masks, labels = [], []
    for cls in range(10):
        for _ in range(samples_per_class):
            cx = 24 + int(rng.integers(-4, 5))
            cy = 24 + int(rng.integers(-4, 5))
            r = 14 + int(rng.integers(-2, 3))
            d2 = (xx - cx) ** 2 + (yy - cy) ** 2
            if cls == 0:
                m = d2 <= r * r
            elif cls == 1:
                m = (d2 <= r * r) & (d2 >= (r - 5) ** 2)
            elif cls == 2:
                m = (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
            elif cls == 3:
                m = (
                    (np.abs(xx - cx) <= r)
                    & (np.abs(yy - cy) <= r)
                    & ((np.abs(xx - cx) >= r - 4) | (np.abs(yy - cy) >= r - 4))
                )
            elif cls == 4:
                m = ((np.abs(xx - cx) <= 4) | (np.abs(yy - cy) <= 4)) & (d2 <= (r + 4) ** 2)
            elif cls == 5:
                m = (np.abs((xx - cx) - (yy - cy)) <= 4) | (np.abs((xx - cx) + (yy - cy)) <= 4)
                m &= d2 <= (r + 4) ** 2
            elif cls == 6:
                m = ((yy - cy) % 8 < 4) & (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
            elif cls == 7:
                m = ((xx - cx) % 8 < 4) & (np.abs(xx - cx) <= r) & (np.abs(yy - cy) <= r)
            elif cls == 8:
                m = (yy - cy >= -r) & (yy - cy <= r) & (np.abs(xx - cx) <= (yy - cy + r) / 2)
            else:
                m = (((xx - cx) // 6 + (yy - cy) // 6) % 2 == 0) & (d2 <= r * r)
            flip = rng.random((48, 48)) < noise
            masks.append(m ^ flip)
            labels.append(cls)
    return np.array(masks), np.array(labels, dtype=np.int64)
