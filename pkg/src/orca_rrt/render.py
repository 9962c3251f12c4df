"""
SVG rendering of instances and solutions.
"""

import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Optional

from .traj import ProblemInstance, Solution

SVG_NS = "http://www.w3.org/2000/svg"

# Stroke colours cycled over the agents.
PALETTE = (
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
    "#e377c2",
    "#7f7f7f",
    "#bcbd22",
    "#17becf",
)


def _num(value: float) -> str:
    text = f"{value:.3f}".rstrip("0").rstrip(".")
    return "0" if text == "-0" else text


def render_svg(inst: ProblemInstance, solution: Optional[Solution] = None, scale: float = 1.0) -> str:
    """
    Draw the boundary, obstacles, start and goal discs and, when a solution
    is given, one polyline path per agent.

    World y points up; the drawing flips it so the picture matches.
    """
    b = inst.env.boundary
    width, height = b.width * scale, b.height * scale
    root = ET.Element(
        "svg",
        {
            "xmlns": SVG_NS,
            "version": "1.1",
            "width": _num(width),
            "height": _num(height),
            "viewBox": f"{_num(b.xmin)} {_num(b.ymin)} {_num(b.width)} {_num(b.height)}",
        },
    )
    ET.SubElement(root, "title").text = f"{inst.env.name}: {inst.n} agents"
    world = ET.SubElement(
        root, "g", {"transform": f"matrix(1 0 0 -1 0 {_num(b.ymin + b.ymax)})"}
    )
    ET.SubElement(
        world,
        "rect",
        {
            "x": _num(b.xmin),
            "y": _num(b.ymin),
            "width": _num(b.width),
            "height": _num(b.height),
            "fill": "white",
            "stroke": "black",
            "stroke-width": "2",
        },
    )

    obstacles = ET.SubElement(world, "g", {"id": "obstacles", "fill": "#555555"})
    for poly in inst.env.obstacles:
        points = " ".join(f"{_num(v.x)},{_num(v.y)}" for v in poly.vertices)
        ET.SubElement(obstacles, "polygon", {"points": points})

    agents = ET.SubElement(world, "g", {"id": "agents"})
    for i, agent in enumerate(inst.agents):
        colour = PALETTE[i % len(PALETTE)]
        ET.SubElement(
            agents,
            "circle",
            {
                "class": "start",
                "cx": _num(agent.start.x),
                "cy": _num(agent.start.y),
                "r": _num(agent.radius),
                "fill": colour,
                "fill-opacity": "0.35",
                "stroke": colour,
            },
        )
        ET.SubElement(
            agents,
            "circle",
            {
                "class": "goal",
                "cx": _num(agent.goal.x),
                "cy": _num(agent.goal.y),
                "r": _num(agent.radius),
                "fill": "none",
                "stroke": colour,
                "stroke-dasharray": "8 6",
            },
        )

    if solution is not None:
        paths = ET.SubElement(world, "g", {"id": "trajectories", "fill": "none"})
        for i, tr in enumerate(solution.trajectories):
            commands = " ".join(
                ("M" if k == 0 else "L") + f"{_num(x)},{_num(y)}"
                for k, (x, y) in enumerate(tr.points)
            )
            ET.SubElement(
                paths,
                "path",
                {
                    "d": commands,
                    "stroke": PALETTE[i % len(PALETTE)],
                    "stroke-width": "3",
                },
            )

    ET.indent(root)
    return ET.tostring(root, encoding="unicode") + "\n"


def write_svg(inst: ProblemInstance, out_path, solution: Optional[Solution] = None) -> None:
    Path(out_path).write_text(render_svg(inst, solution), encoding="utf-8")
