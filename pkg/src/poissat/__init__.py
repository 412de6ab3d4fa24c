"""Saturation charts and local normal forms around submanifolds of
Poisson manifolds: expression trees, Dirac linear algebra, bivector
fields, submanifold classification, cotangent spray flows, local models,
and a deterministic scene-driven CLI.
"""

__version__ = "0.1.0"

CONVENTION = (
    "sharp(a) = PI @ a; pi(a,b) = <b, sharp(a)>; "
    "omega_can((v1,k1),(v2,k2)) = <v1,k2> - <v2,k1>; "
    "gauge: (v,a) -> (v, a + i_v eta)"
)
