"""Stage/tree Haar cascade: XML subset parser, window evaluator and a
multi-scale sliding-window detector. Cascade training is out of scope;
models come from files.

XML grammar (children in any order, unknown elements are errors):

    <cascade>
      <size>W H</size>
      <stages>
        <stage>
          <stage_threshold>F</stage_threshold>
          <trees>
            <tree>
              <node>
                <feature>
                  <rects>
                    <rect>x y w h weight</rect>   (2 or more)
                  </rects>
                </feature>
                <node_threshold>F</node_threshold>
                <left_val>F</left_val>   | <left_node>I</left_node>
                <right_val>F</right_val> | <right_node>I</right_node>
              </node>
              (more nodes for depth-2 trees; node 0 is the root)
            </tree>
          </trees>
        </stage>
      </stages>
    </cascade>
"""

from __future__ import annotations

import xml.etree.ElementTree as ET
from dataclasses import dataclass

import numpy as np

from .errors import (
    ImageTooSmall,
    RectOutOfWindow,
    SchemaViolation,
    WindowOutOfFrame,
    XmlSyntax,
)
from .imaging import Image, IntegralTable, integral_image


@dataclass
class WeightedRect:
    x: int
    y: int
    w: int
    h: int
    weight: float


@dataclass
class TreeNode:
    rects: list
    threshold: float
    left_val: float | None = None
    left_child: int | None = None
    right_val: float | None = None
    right_child: int | None = None


@dataclass
class Tree:
    nodes: list  # root at index 0


@dataclass
class Stage:
    threshold: float
    trees: list


@dataclass
class CascadeModel:
    window: tuple  # (w, h)
    stages: list


@dataclass
class Detection:
    bbox: tuple  # (x, y, w, h)
    neighbors: int


def _only_children(elem, allowed):
    for child in elem:
        if child.tag not in allowed:
            raise SchemaViolation(f"unexpected element <{child.tag}> inside <{elem.tag}>")


def _get_one(elem, tag):
    found = [c for c in elem if c.tag == tag]
    if len(found) != 1:
        raise SchemaViolation(f"<{elem.tag}> must contain exactly one <{tag}>")
    return found[0]


def _float(elem):
    try:
        return float(elem.text.strip())
    except (TypeError, ValueError, AttributeError) as exc:
        raise SchemaViolation(f"<{elem.tag}> is not a number") from exc


def _parse_node(elem, n_nodes, where):
    _only_children(
        elem,
        {"feature", "node_threshold", "left_val", "left_node", "right_val", "right_node"},
    )
    feature = _get_one(elem, "feature")
    _only_children(feature, {"rects"})
    rects_el = _get_one(feature, "rects")
    _only_children(rects_el, {"rect"})
    rects = []
    for r in rects_el:
        parts = (r.text or "").split()
        if len(parts) != 5:
            raise SchemaViolation(f"{where}: <rect> needs 'x y w h weight'")
        try:
            x, y, w, h = (int(p) for p in parts[:4])
            weight = float(parts[4])
        except ValueError as exc:
            raise SchemaViolation(f"{where}: malformed <rect> {r.text!r}") from exc
        rects.append(WeightedRect(x, y, w, h, weight))
    if len(rects) < 2:
        raise SchemaViolation(f"{where}: feature needs at least 2 rects")
    weights = [r.weight for r in rects]
    if not (any(w < 0 for w in weights) and any(w > 0 for w in weights)):
        raise SchemaViolation(f"{where}: feature needs positive and negative rect weights")
    node = TreeNode(rects, _float(_get_one(elem, "node_threshold")))
    for side in ("left", "right"):
        vals = [c for c in elem if c.tag == f"{side}_val"]
        children = [c for c in elem if c.tag == f"{side}_node"]
        if len(vals) + len(children) != 1:
            raise SchemaViolation(f"{where}: node needs exactly one {side}_val or {side}_node")
        if vals:
            setattr(node, f"{side}_val", _float(vals[0]))
        else:
            idx = int(_float(children[0]))
            if not 0 <= idx < n_nodes:
                raise SchemaViolation(f"{where}: child index {idx} out of range")
            setattr(node, f"{side}_child", idx)
    return node


def parse_cascade(doc: str) -> CascadeModel:
    try:
        root = ET.fromstring(doc)
    except ET.ParseError as exc:
        raise XmlSyntax(str(exc)) from exc
    if root.tag != "cascade":
        raise SchemaViolation(f"root must be <cascade>, got <{root.tag}>")
    _only_children(root, {"size", "stages"})
    size_parts = (_get_one(root, "size").text or "").split()
    if len(size_parts) != 2:
        raise SchemaViolation("<size> needs 'W H'")
    try:
        win_w, win_h = int(size_parts[0]), int(size_parts[1])
    except ValueError as exc:
        raise SchemaViolation("<size> entries must be integers") from exc
    if win_w <= 0 or win_h <= 0:
        raise SchemaViolation("window size must be positive")
    stages_el = _get_one(root, "stages")
    _only_children(stages_el, {"stage"})
    stages = []
    for si, stage_el in enumerate(stages_el):
        _only_children(stage_el, {"stage_threshold", "trees"})
        trees_el = _get_one(stage_el, "trees")
        _only_children(trees_el, {"tree"})
        trees = []
        for ti, tree_el in enumerate(trees_el):
            _only_children(tree_el, {"node"})
            node_els = list(tree_el)
            if not node_els:
                raise SchemaViolation(f"stage {si} tree {ti}: tree needs at least one node")
            nodes = [
                _parse_node(n, len(node_els), f"stage {si} tree {ti} node {ni}")
                for ni, n in enumerate(node_els)
            ]
            for ni, node in enumerate(nodes):
                for r in node.rects:
                    if r.x < 0 or r.y < 0 or r.w <= 0 or r.h <= 0 or r.x + r.w > win_w or r.y + r.h > win_h:
                        raise RectOutOfWindow(
                            f"stage {si} tree {ti} node {ni}: rect "
                            f"({r.x},{r.y},{r.w},{r.h}) outside {win_w}x{win_h} window"
                        )
            trees.append(Tree(nodes))
        if not trees:
            raise SchemaViolation(f"stage {si} has no trees")
        stages.append(Stage(_float(_get_one(stage_el, "stage_threshold")), trees))
    if not stages:
        raise SchemaViolation("cascade has no stages")
    return CascadeModel((win_w, win_h), stages)


def serialize_cascade(model: CascadeModel) -> str:
    """Emit the documented XML subset; parse(serialize(m)) reproduces m."""

    def fmt(v: float) -> str:
        return repr(float(v))

    lines = ["<cascade>", f"  <size>{model.window[0]} {model.window[1]}</size>", "  <stages>"]
    for stage in model.stages:
        lines.append("    <stage>")
        lines.append(f"      <stage_threshold>{fmt(stage.threshold)}</stage_threshold>")
        lines.append("      <trees>")
        for tree in stage.trees:
            lines.append("        <tree>")
            for node in tree.nodes:
                lines.append("          <node>")
                lines.append("            <feature><rects>")
                for r in node.rects:
                    lines.append(
                        f"              <rect>{r.x} {r.y} {r.w} {r.h} {fmt(r.weight)}</rect>"
                    )
                lines.append("            </rects></feature>")
                lines.append(f"            <node_threshold>{fmt(node.threshold)}</node_threshold>")
                for side in ("left", "right"):
                    val = getattr(node, f"{side}_val")
                    if val is not None:
                        lines.append(f"            <{side}_val>{fmt(val)}</{side}_val>")
                    else:
                        child = getattr(node, f"{side}_child")
                        lines.append(f"            <{side}_node>{child}</{side}_node>")
                lines.append("          </node>")
            lines.append("        </tree>")
        lines.append("      </trees>")
        lines.append("    </stage>")
    lines.append("  </stages>")
    lines.append("</cascade>")
    return "\n".join(lines) + "\n"


def _scaled_rect(r: WeightedRect, scale: float):
    return (
        int(round(r.x * scale)),
        int(round(r.y * scale)),
        max(1, int(round(r.w * scale))),
        max(1, int(round(r.h * scale))),
    )


def _eval_tree(tree: Tree, integral: IntegralTable, x, y, scale, inv_norm) -> float:
    idx = 0
    while True:
        node = tree.nodes[idx]
        f = 0.0
        for r in node.rects:
            rx, ry, rw, rh = _scaled_rect(r, scale)
            f += r.weight * integral.rect_sum(x + rx, y + ry, rw, rh)
        f *= inv_norm
        if f < node.threshold:
            if node.left_val is not None:
                return node.left_val
            idx = node.left_child
        else:
            if node.right_val is not None:
                return node.right_val
            idx = node.right_child


def evaluate_window(model: CascadeModel, integral: IntegralTable, sq: IntegralTable, win) -> bool:
    """Pass/fail of one window at (x, y) with the given scale multiplier.

    Feature values are normalized by window area times the windowed
    stddev (clamped below at 1 to keep flat regions finite).
    """
    x, y, scale = win
    ww = int(round(model.window[0] * scale))
    wh = int(round(model.window[1] * scale))
    if x < 0 or y < 0 or x + ww > integral.width or y + wh > integral.height:
        raise WindowOutOfFrame(f"window ({x},{y},{ww},{wh}) outside frame")
    area = ww * wh
    mean = integral.rect_sum(x, y, ww, wh) / area
    var = sq.rect_sqsum(x, y, ww, wh) / area - mean * mean
    sigma = np.sqrt(max(var, 0.0))
    if sigma < 1.0:
        sigma = 1.0
    inv_norm = 1.0 / (area * sigma)
    for stage in model.stages:
        total = sum(_eval_tree(t, integral, x, y, scale, inv_norm) for t in stage.trees)
        if total < stage.threshold:
            return False
    return True


def _mutual_overlap(a, b) -> bool:
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    ix = max(0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    return inter * 2 >= aw * ah and inter * 2 >= bw * bh


def _group_detections(raw, min_neighbors):
    parent = list(range(len(raw)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(raw)):
        for j in range(i + 1, len(raw)):
            if _mutual_overlap(raw[i], raw[j]):
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    groups = {}
    for i in range(len(raw)):
        groups.setdefault(find(i), []).append(raw[i])
    out = []
    for members in groups.values():
        if len(members) < min_neighbors:
            continue
        arr = np.array(members, dtype=np.float64)
        mean = arr.mean(axis=0)
        bbox = tuple(int(round(v)) for v in mean)
        out.append(Detection(bbox, len(members)))
    out.sort(key=lambda d: (d.bbox[0], d.bbox[1], d.bbox[2]))
    return out


def detect_multiscale(
    model: CascadeModel,
    gray: Image,
    scale_factor: float = 1.1,
    step_fraction: float = 1.0,
    min_neighbors: int = 1,
):
    """Scan all scales window*scale_factor^k that fit the frame; group raw
    hits by >=50% mutual overlap; keep groups with >= min_neighbors hits."""
    if scale_factor < 1.05:
        raise ValueError("scale_factor must be >= 1.05")
    w0, h0 = model.window
    if gray.width < w0 or gray.height < h0:
        raise ImageTooSmall(f"frame {gray.width}x{gray.height} smaller than {w0}x{h0} window")
    integral = integral_image(gray)
    raw = []
    scale = 1.0
    while True:
        ww = int(round(w0 * scale))
        wh = int(round(h0 * scale))
        if ww > gray.width or wh > gray.height:
            break
        stride = max(1, int(round(step_fraction * scale)))
        for y in range(0, gray.height - wh + 1, stride):
            for x in range(0, gray.width - ww + 1, stride):
                if evaluate_window(model, integral, integral, (x, y, scale)):
                    raw.append((x, y, ww, wh))
        scale *= scale_factor
    return _group_detections(raw, min_neighbors)
