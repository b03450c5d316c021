"""Online multiple-instance boosting tracker over random Haar-like features.

Each weak classifier keeps running Gaussians for the positive and negative
class of one feature and scores patches by the log-likelihood ratio. Every
frame the tracker scores a disc of candidate offsets, moves to the argmax,
then updates all classifiers from a positive bag around the new location
and negatives sampled from an annulus, and greedily re-selects the
classifiers that maximize the noisy-OR bag likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rand
from .errors import BoxOutOfFrame, DegenerateBox, PatchOutOfFrame
from .imaging import Image, IntegralTable, integral_image


@dataclass
class MILParams:
    search_radius: int = 25
    pos_radius: int = 4
    neg_inner: float = 8.0  # 2 * pos_radius
    neg_outer: float = 37.5  # 1.5 * search_radius
    num_features: int = 250
    num_selected: int = 50
    num_negatives: int = 65
    gamma: float = 0.85
    sigma_floor: float = 1e-3

    def __post_init__(self):
        if self.num_selected > self.num_features:
            raise ValueError("num_selected cannot exceed num_features")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must be in (0, 1)")


@dataclass
class TrackResult:
    bbox: tuple
    confidence: float


@dataclass
class TrackerState:
    bbox: tuple
    frame_size: tuple  # (w, h)
    params: MILParams
    # flattened feature pool: one row per rectangle
    rect_x: np.ndarray
    rect_y: np.ndarray
    rect_w: np.ndarray
    rect_h: np.ndarray
    rect_weight: np.ndarray
    feat_of_rect: np.ndarray
    mu1: np.ndarray
    sg1: np.ndarray
    mu0: np.ndarray
    sg0: np.ndarray
    selected: np.ndarray
    rng: np.random.Generator = field(repr=False)


def _generate_features(pw: int, ph: int, m: int, seed: int):
    """Random 2-4 rect features with weights in [-1, 1], inside a pw x ph patch."""
    rng = rand.generator(seed, 7)
    rows = []
    for f in range(m):
        for _ in range(int(rng.integers(2, 5))):
            x = int(rng.integers(0, pw))
            y = int(rng.integers(0, ph))
            w = int(rng.integers(1, pw - x + 1))
            h = int(rng.integers(1, ph - y + 1))
            weight = float(rng.uniform(-1.0, 1.0))
            rows.append((x, y, w, h, weight, f))
    arr = np.array(rows, dtype=np.float64)
    return (
        arr[:, 0].astype(np.intp),
        arr[:, 1].astype(np.intp),
        arr[:, 2].astype(np.intp),
        arr[:, 3].astype(np.intp),
        arr[:, 4],
        arr[:, 5].astype(np.intp),
    )


def _feature_values(state: TrackerState, integral: IntegralTable, locs: np.ndarray, feats: np.ndarray):
    """Values of the given features at patch top-left corners `locs` (n, 2).

    Returns (n_locs, len(feats)) float64, normalized by the patch area.
    """
    keep = np.isin(state.feat_of_rect, feats)
    rx, ry = state.rect_x[keep], state.rect_y[keep]
    rw, rh = state.rect_w[keep], state.rect_h[keep]
    weights = state.rect_weight[keep]
    # map global feature ids to column indices
    col_of = {f: i for i, f in enumerate(feats)}
    cols = np.array([col_of[f] for f in state.feat_of_rect[keep]], dtype=np.intp)

    lx = locs[:, 0][:, None]
    ly = locs[:, 1][:, None]
    x1 = lx + rx[None, :]
    y1 = ly + ry[None, :]
    x2 = x1 + rw[None, :]
    y2 = y1 + rh[None, :]
    s = integral.sum
    rect_sums = (s[y2, x2] - s[y1, x2] - s[y2, x1] + s[y1, x1]).astype(np.float64)
    area = state.bbox[2] * state.bbox[3]
    weighted = rect_sums * weights[None, :] / area
    out = np.zeros((locs.shape[0], len(feats)), dtype=np.float64)
    np.add.at(out.T, cols, weighted.T)
    return out


def _llr(state: TrackerState, values: np.ndarray, feats: np.ndarray) -> np.ndarray:
    """Gaussian log-likelihood ratio log(p1/p0) per value column."""
    mu1, sg1 = state.mu1[feats], state.sg1[feats]
    mu0, sg0 = state.mu0[feats], state.sg0[feats]
    return (
        np.log(sg0 / sg1)
        + (values - mu0) ** 2 / (2.0 * sg0**2)
        - (values - mu1) ** 2 / (2.0 * sg1**2)
    )


def _disc_offsets(radius: float) -> np.ndarray:
    """Integer (dy, dx) offsets with dy^2+dx^2 <= r^2, lexicographic order."""
    r = int(np.floor(radius))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    keep = dy**2 + dx**2 <= radius**2
    return np.stack([dy[keep], dx[keep]], axis=1)


def _in_frame(locs: np.ndarray, state: TrackerState) -> np.ndarray:
    w, h = state.bbox[2], state.bbox[3]
    fw, fh = state.frame_size
    return (
        (locs[:, 0] >= 0)
        & (locs[:, 1] >= 0)
        & (locs[:, 0] + w <= fw)
        & (locs[:, 1] + h <= fh)
    )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _update_gaussians(state: TrackerState, cur_vals, pos_vals, neg_vals, first=False):
    """Running-average update of the class Gaussians with rate gamma.

    The positive Gaussian follows the instance at the tracked location so
    that on an unchanged frame the score surface peaks exactly there; its
    sigma shrinks toward the floor as the appearance stays consistent. On
    the very first update there is no history to blend with, so the
    Gaussians are set directly from the sample statistics.
    """
    g = 0.0 if first else state.params.gamma
    floor = state.params.sigma_floor
    for m, v, mu_name, sg_name in (
        (cur_vals.mean(axis=0), cur_vals.var(axis=0), "mu1", "sg1"),
        (neg_vals.mean(axis=0), neg_vals.var(axis=0), "mu0", "sg0"),
    ):
        mu = getattr(state, mu_name)
        sg = getattr(state, sg_name)
        setattr(state, mu_name, g * mu + (1.0 - g) * m)
        setattr(state, sg_name, np.maximum(np.sqrt(g * sg**2 + (1.0 - g) * v), floor))


def noisy_or(probs: np.ndarray) -> float:
    """Bag positive probability 1 - prod(1 - p_i)."""
    return float(1.0 - np.prod(1.0 - np.asarray(probs, dtype=np.float64)))


def _select_classifiers(state: TrackerState, pos_llr: np.ndarray, neg_llr: np.ndarray):
    """Greedy pick of K classifiers maximizing the noisy-OR bag likelihood.

    pos_llr / neg_llr: (n_instances, M) per-classifier LLRs at the bag
    locations. Returns the chosen indices and the LL trace per step.
    """
    m = pos_llr.shape[1]
    k = state.params.num_selected
    h_pos = np.zeros(pos_llr.shape[0])
    h_neg = np.zeros(neg_llr.shape[0])
    chosen = []
    trace = []
    remaining = np.ones(m, dtype=bool)
    eps = 1e-12
    for _ in range(k):
        p_pos = _sigmoid(h_pos[:, None] + pos_llr)  # (n_pos, M)
        p_neg = _sigmoid(h_neg[:, None] + neg_llr)
        bag_pos = 1.0 - np.prod(1.0 - p_pos, axis=0)
        ll = np.log(np.clip(bag_pos, eps, None)) + np.sum(
            np.log(np.clip(1.0 - p_neg, eps, None)), axis=0
        )
        ll[~remaining] = -np.inf
        best = int(ll.argmax())
        chosen.append(best)
        trace.append(float(ll[best]))
        remaining[best] = False
        h_pos = h_pos + pos_llr[:, best]
        h_neg = h_neg + neg_llr[:, best]
    return np.array(chosen, dtype=np.intp), trace


def _mil_update(state: TrackerState, integral: IntegralTable, first=False):
    """Form bags around the current bbox, update Gaussians, re-select K."""
    p = state.params
    cx, cy = state.bbox[0], state.bbox[1]
    pos_off = _disc_offsets(p.pos_radius)
    pos_locs = np.stack([cx + pos_off[:, 1], cy + pos_off[:, 0]], axis=1)
    pos_locs = pos_locs[_in_frame(pos_locs, state)]

    ann = _disc_offsets(p.neg_outer)
    d2 = ann[:, 0] ** 2 + ann[:, 1] ** 2
    ann = ann[d2 > p.neg_inner**2]
    neg_locs = np.stack([cx + ann[:, 1], cy + ann[:, 0]], axis=1)
    neg_locs = neg_locs[_in_frame(neg_locs, state)]
    if len(neg_locs) > p.num_negatives:
        pick = np.sort(state.rng.choice(len(neg_locs), p.num_negatives, replace=False))
        neg_locs = neg_locs[pick]

    all_feats = np.arange(p.num_features, dtype=np.intp)
    pos_vals = _feature_values(state, integral, pos_locs, all_feats)
    neg_vals = _feature_values(state, integral, neg_locs, all_feats)
    cur_vals = _feature_values(state, integral, np.array([[cx, cy]]), all_feats)
    _update_gaussians(state, cur_vals, pos_vals, neg_vals, first)
    pos_llr = _llr(state, pos_vals, all_feats)
    neg_llr = _llr(state, neg_vals, all_feats)
    state.selected, _ = _select_classifiers(state, pos_llr, neg_llr)


def init_tracker(gray: Image, bbox, params: MILParams = MILParams(), seed: int = 42) -> TrackerState:
    """Seeded feature pool plus one bag update at the initial box."""
    x, y, w, h = bbox
    if w * h < 16:
        raise DegenerateBox(f"bbox area {w * h} below minimum 16")
    if x < 0 or y < 0 or x + w > gray.width or y + h > gray.height:
        raise BoxOutOfFrame(f"bbox {bbox} outside {gray.width}x{gray.height} frame")
    rx, ry, rw, rh, rweight, feat_of_rect = _generate_features(w, h, params.num_features, seed)
    m = params.num_features
    state = TrackerState(
        bbox=(x, y, w, h),
        frame_size=(gray.width, gray.height),
        params=params,
        rect_x=rx,
        rect_y=ry,
        rect_w=rw,
        rect_h=rh,
        rect_weight=rweight,
        feat_of_rect=feat_of_rect,
        mu1=np.zeros(m),
        sg1=np.ones(m),
        mu0=np.zeros(m),
        sg0=np.ones(m),
        selected=np.arange(params.num_selected, dtype=np.intp),
        rng=rand.generator(seed, 11),
    )
    _mil_update(state, integral_image(gray), first=True)
    return state


def mil_score(state: TrackerState, gray: Image, loc) -> float:
    """Sum of selected weak classifiers' LLRs for the patch at `loc`."""
    x, y = loc
    w, h = state.bbox[2], state.bbox[3]
    if x < 0 or y < 0 or x + w > gray.width or y + h > gray.height:
        raise PatchOutOfFrame(f"patch at {loc} outside frame")
    integral = integral_image(gray)
    vals = _feature_values(state, integral, np.array([[x, y]]), state.selected)
    return float(_llr(state, vals, state.selected).sum())


def track_step(state: TrackerState, gray: Image) -> TrackResult:
    """One tracking iteration: move to the best-scoring offset, then learn."""
    if (gray.width, gray.height) != state.frame_size:
        raise PatchOutOfFrame("frame size changed mid-session")
    p = state.params
    integral = integral_image(gray)
    x, y = state.bbox[0], state.bbox[1]
    offs = _disc_offsets(p.search_radius)  # lexicographic (dy, dx)
    locs = np.stack([x + offs[:, 1], y + offs[:, 0]], axis=1)
    keep = _in_frame(locs, state)
    locs = locs[keep]
    vals = _feature_values(state, integral, locs, state.selected)
    scores = _llr(state, vals, state.selected).sum(axis=1)
    best = int(scores.argmax())  # first max: smallest (dy, dx) wins ties
    state.bbox = (int(locs[best, 0]), int(locs[best, 1]), state.bbox[2], state.bbox[3])
    confidence = float(scores[best]) / len(state.selected)
    _mil_update(state, integral)
    return TrackResult(state.bbox, confidence)


def confidence_ok(result: TrackResult, threshold: float) -> bool:
    """Inclusive confidence gate used to trigger pipeline re-detection."""
    return result.confidence >= threshold
