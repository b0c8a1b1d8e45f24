"""SVG rendering of episodes and sweep frontiers.

Documents are built with the standard library XML tree so output is always
well-formed. World coordinates map to a fixed-size canvas with y flipped
(SVG y grows downward).
"""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .scenes import Disc, Polygon, Rect, Scene, shape_centroid, _rotate

CANVAS = 480.0
PLAN_COLORS = ("#4477aa", "#66ccee", "#228833", "#ccbb44", "#ee6677", "#aa3377")


class _Frame:
    def __init__(self, scene: Scene | None, pad: float = 0.05):
        ws = scene.workspace if scene is not None else (0.0, 0.0, 1.0, 1.0)
        self.x0, self.y0, self.x1, self.y1 = ws
        extent = max(self.x1 - self.x0, self.y1 - self.y0)
        self.scale = CANVAS / (extent * (1 + 2 * pad))
        self.off = extent * pad

    def pt(self, p) -> tuple[float, float]:
        x = (p[0] - self.x0 + self.off) * self.scale
        y = CANVAS - (p[1] - self.y0 + self.off) * self.scale
        return round(x, 2), round(y, 2)

    def length(self, r: float) -> float:
        return round(r * self.scale, 2)


def _poly_points(frame: _Frame, pts) -> str:
    return " ".join(f"{x},{y}" for x, y in (frame.pt(p) for p in pts))


def _add_object(root, frame: _Frame, obj, stroke: str) -> None:
    x, y, theta = obj.pose
    attrs = dict(fill="none", stroke=stroke)
    attrs["class"] = "object"
    if isinstance(obj.shape, Disc):
        cx, cy = frame.pt((x, y))
        ET.SubElement(root, "circle", cx=str(cx), cy=str(cy),
                      r=str(frame.length(obj.shape.r)), **attrs)
    elif isinstance(obj.shape, Rect):
        w, h = obj.shape.w, obj.shape.h
        corners = np.array([[-w / 2, -h / 2], [w / 2, -h / 2],
                            [w / 2, h / 2], [-w / 2, h / 2]])
        world = _rotate(corners, theta) + np.array([x, y])
        ET.SubElement(root, "polygon", points=_poly_points(frame, world), **attrs)
    else:
        verts = _rotate(np.asarray(obj.shape.verts, dtype=float), theta) + np.array([x, y])
        ET.SubElement(root, "polygon", points=_poly_points(frame, verts), **attrs)


def render_episode_svg(scene: Scene | None, executed: np.ndarray,
                       plans: list[np.ndarray] | None = None,
                       title: str = "episode") -> str:
    """SVG document: workspace frame, object outlines, obstacle safety
    circles, the executed polyline, and per-plan waypoint markers."""
    frame = _Frame(scene)
    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      width=str(int(CANVAS)), height=str(int(CANVAS)),
                      viewBox=f"0 0 {int(CANVAS)} {int(CANVAS)}")
    ET.SubElement(root, "title").text = title

    tlx, tly = frame.pt((frame.x0, frame.y1))
    brx, bry = frame.pt((frame.x1, frame.y0))
    ET.SubElement(root, "rect", x=str(tlx), y=str(tly),
                  width=str(round(brx - tlx, 2)), height=str(round(bry - tly, 2)),
                  fill="white", stroke="#222", **{"class": "workspace"})

    if scene is not None:
        for obj in scene.objects:
            is_target = obj.label in scene.target_labels
            is_obstacle = obj.label in scene.obstacle_labels
            stroke = "#228833" if is_target else "#cc3311" if is_obstacle else "#888"
            _add_object(root, frame, obj, stroke)
            if is_obstacle:
                cx, cy = frame.pt(obj.centroid())
                ET.SubElement(root, "circle", cx=str(cx), cy=str(cy),
                              r=str(frame.length(scene.q_star)), fill="none",
                              stroke="#cc3311", **{"stroke-dasharray": "4 3",
                                                   "class": "safety"})
        sx, sy = frame.pt(scene.start)
        ET.SubElement(root, "circle", cx=str(sx), cy=str(sy), r="4",
                      fill="#222", **{"class": "start"})

    for i, plan in enumerate(plans or []):
        color = PLAN_COLORS[i % len(PLAN_COLORS)]
        for w in np.asarray(plan):
            x, y = frame.pt(w)
            ET.SubElement(root, "circle", cx=str(x), cy=str(y), r="1.5",
                          fill=color, **{"fill-opacity": "0.6", "class": "plan"})

    executed = np.asarray(executed)
    if len(executed) >= 2:
        ET.SubElement(root, "polyline", points=_poly_points(frame, executed),
                      fill="none", stroke="#000", **{"stroke-width": "1.5",
                                                     "class": "executed"})
    return ET.tostring(root, encoding="unicode")


def render_frontier_svg(rows: list[dict], x_key: str = "mean_min_clearance",
                        y_key: str = "mean_smoothness",
                        label_key: str = "rho") -> str:
    """Scatter of the clearance/smoothness frontier from sweep rows."""
    root = ET.Element("svg", xmlns="http://www.w3.org/2000/svg",
                      width=str(int(CANVAS)), height=str(int(CANVAS)),
                      viewBox=f"0 0 {int(CANVAS)} {int(CANVAS)}")
    ET.SubElement(root, "title").text = f"{y_key} vs {x_key}"
    ET.SubElement(root, "rect", x="40", y="40", width=str(int(CANVAS) - 80),
                  height=str(int(CANVAS) - 80), fill="white", stroke="#222")
    if rows:
        xs = np.array([float(r[x_key]) for r in rows])
        ys = np.array([float(r[y_key]) for r in rows])

        def span(v):
            lo, hi = float(v.min()), float(v.max())
            return (lo, hi if hi > lo else lo + 1.0)

        (x_lo, x_hi), (y_lo, y_hi) = span(xs), span(ys)
        inner = CANVAS - 80
        for r, x, y in zip(rows, xs, ys):
            px = 40 + (x - x_lo) / (x_hi - x_lo) * inner
            py = CANVAS - 40 - (y - y_lo) / (y_hi - y_lo) * inner
            ET.SubElement(root, "circle", cx=str(round(px, 2)), cy=str(round(py, 2)),
                          r="4", fill="#4477aa")
            txt = ET.SubElement(root, "text", x=str(round(px + 6, 2)),
                                y=str(round(py - 6, 2)), **{"font-size": "11"})
            txt.text = str(r[label_key])
    return ET.tostring(root, encoding="unicode")
