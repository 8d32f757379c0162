"""Regenerate the kernel-exported STEP fixtures under tests/fixtures/step/.

Requires CadQuery. The outputs are committed; the test suite never runs this.

    python3 tests/fixtures/tools/export_kernel_fixtures.py tests/fixtures/step
"""
import math
import sys
from pathlib import Path

import cadquery as cq


def saddle(U=300, V=300, SPAN=50, CURV=0.004):
    net = []
    for i in range(U):
        u = i / (U - 1); x = (u - 0.5) * SPAN
        row = []
        for j in range(V):
            v = j / (V - 1); y = (v - 0.5) * SPAN
            z = CURV * (x**2 - y**2)
            row.append(cq.Vector(x, y, z))
        net.append(row)
    return cq.Face.makeSplineApprox(net)


def gaussian(U=100, V=100, SPAN=100, H=7):
    net = []
    for i in range(U):
        u = i / (U - 1); x = (u - 0.5) * SPAN
        row = []
        for j in range(V):
            v = j / (V - 1); y = (v - 0.5) * SPAN
            r2 = (x**2 + y**2) / ((SPAN / 3)**2)
            z = H * math.exp(-r2)
            row.append(cq.Vector(x, y, z))
        net.append(row)
    return cq.Face.makeSplineApprox(net).thicken(2).translate((0, 0, -1))


def wave(U=60, V=60, SPAN=80, A=4, LAMBDA=30):
    net = []
    for i in range(U):
        u = i / (U - 1); x = (u - 0.5) * SPAN
        row = []
        for j in range(V):
            v = j / (V - 1); y = (v - 0.5) * SPAN
            z = A * math.sin(2 * math.pi * x / LAMBDA)
            row.append(cq.Vector(x, y, z))
        net.append(row)
    return cq.Face.makeSplineApprox(net).thicken(2)


def bracket_on_gaussian():
    surf = gaussian(U=40, V=40, SPAN=100, H=7)
    plate = cq.Workplane("XY").box(60, 30, 20).translate((0, 0, 2))
    return plate.intersect(cq.Workplane("XY").add(surf)).val()


def shapes():
    yield "kernel_box", cq.Workplane("XY").box(10, 20, 30).val()
    yield "kernel_cylinder", cq.Workplane("XY").cylinder(20, 5).val()
    yield "kernel_plate_holes", (cq.Workplane("XY").box(40, 20, 4)
                                  .faces(">Z").workplane().pushPoints([(-10, 0), (10, 0)])
                                  .hole(4).val())
    yield "kernel_filleted_block", cq.Workplane("XY").box(20, 20, 10).edges("|Z").fillet(3).val()
    yield "kernel_l_bracket", (cq.Workplane("XY").polyline([(0, 0), (30, 0), (30, 4), (4, 4), (4, 25), (0, 25)])
                               .close().extrude(15).val())
    yield "kernel_spline_extrude", (cq.Workplane("XY").spline([(0, 0), (10, 6), (20, -4), (30, 2)])
                                    .lineTo(30, -10).lineTo(0, -10).close().extrude(5).val())
    yield "kernel_sphere", cq.Workplane("XY").sphere(8).val()
    yield "kernel_gaussian_surface", gaussian()
    yield "kernel_saddle_surface", saddle()
    yield "kernel_wave_solid", wave()
    yield "kernel_gaussian_bracket", bracket_on_gaussian()


def main(out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, shape in shapes():
        path = out / f"{name}.step"
        cq.exporters.export(shape, str(path))
        print(path, path.stat().st_size)


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/fixtures/step")
