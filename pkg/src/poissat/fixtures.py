"""Shipped scene files.

Each fixture is a complete scene text, emitted byte-identically by the
`fixtures` CLI command.  Together they cover the exit-code contract:
the first three stop at the regularity gate, the rest run the full
pipeline clean.
"""

FIXTURES = {
    "so3-plane": """\
# Linear structure on R^3 (rotation brackets) with the z = 0 plane.
# The plane is not regular: the orthogonal rank drops at the origin.
[poisson]
dim = 3
entry = 1 2 "z"
entry = 2 3 "x"
entry = 3 1 "y"
domain = -2 2

[submanifold]
params = 2
component = "u"
component = "v"
component = "0"
domain = -1 1
""",
    "logsympl-axis": """\
# Plane structure x dx^dy degenerating on the y-axis; the chart runs
# along the x-axis and crosses the degeneracy, so it is not regular.
[poisson]
dim = 2
entry = 1 2 "x"
domain = -2 2

[submanifold]
params = 1
component = "u"
component = "0"
domain = -1 1
""",
    "cubic-graph": """\
# Constant rank-2 structure on R^3 with the graph z = x^3.  The
# orthogonal rank drops along the fold line (0, y, 0): not regular.
[poisson]
dim = 3
entry = 1 2 "1"
domain = -2 2

[submanifold]
params = 2
component = "u"
component = "v"
component = "u^3"
domain = -1 1
""",
    "figure-eight": """\
# Cylinder chart on R^3 x S^1 with the vertical structure dz^dtheta.
# The chart sweeps a figure-eight curve; it is regular of rank 1 and
# coisotropic even though the curve itself self-intersects.
[poisson]
dim = 4
entry = 3 4 "1"
domain = -2 2
domain = -2 2
domain = -4 4
domain = -4 4

[submanifold]
params = 2
vars = t th
component = "sin(2*t)"
component = "sin(t)"
component = "t"
component = "th"
domain = -3 3

[complement]
mode = default

[model]
tol_normal = 1e-5
""",
    "coiso-line": """\
# Constant rank-2 structure on R^3; the x-axis is a coisotropic line.
# Its saturation is the z = 0 plane, found in closed form.
[poisson]
dim = 3
entry = 1 2 "1"
domain = -2 2

[submanifold]
params = 1
component = "u"
component = "0"
component = "0"
domain = -1 1

[complement]
mode = coisotropic

[model]
tol_normal = 1e-5
""",
    "transversal-ray": """\
# Linear structure on R^3 (rotation brackets); a ray off the origin is
# a transversal of the sphere foliation, with an open saturation.
[poisson]
dim = 3
entry = 1 2 "z"
entry = 2 3 "x"
entry = 3 1 "y"
domain = -2 2

[submanifold]
params = 1
component = "u + 1"
component = "0"
component = "0"
domain = -0.5 0.5

[complement]
mode = default

[flow]
xi_radius = 0.05

[model]
tol_normal = 1e-4
""",
    "sympl-plane": """\
# Constant symplectic structure on R^4 with a coordinate 2-plane, a
# symplectic transversal; the saturation is an open neighborhood.
[poisson]
dim = 4
entry = 1 2 "1"
entry = 3 4 "1"
domain = -2 2

[submanifold]
params = 2
component = "u"
component = "v"
component = "0"
component = "0"
domain = -1 1

[complement]
mode = default

[model]
tol_normal = 1e-5
""",
    "zero-structure": """\
# Zero structure on R^3: every chart is regular with rank-0 fibers and
# the saturation is the chart itself.
[poisson]
dim = 3
domain = -2 2

[submanifold]
params = 1
component = "u"
component = "0"
component = "0"
domain = -1 1

[complement]
mode = default
""",
    "gotay-presymplectic": """\
# Presymplectic R^3 with the vertical form dx^dy (one kernel
# direction); the coisotropic-embedding model lives on R^4.
[presymplectic]
dim = 3
entry = 1 2 "1"
radius = 0.1
""",
}
