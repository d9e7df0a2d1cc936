"""Jump and trace residuals under repeated refinement on the sphere and a tube.

    python scripts/jump_trace_study.py [--levels 2] [--omega 1.0]

The offset from the surface is fixed to the base mesh value so that only the
discretisation changes between rows.
"""
import argparse

import numpy as np

from cloakbench.geometry import MeshResolution, make_curve, refine, sphere_mesh, tube_domain
from cloakbench.potentials import default_offset, jump_test, scalar_trace_test


def field(x):
    return np.stack([np.sin(x[:, 1]), np.cos(x[:, 2]), x[:, 0]], axis=1)


def scalar(x):
    return np.cos(x[:, 0]) + x[:, 1] * x[:, 2]


def main(argv=None):
    ap = argparse.ArgumentParser(description="jump/trace residual study")
    ap.add_argument("--levels", type=int, default=1)
    ap.add_argument("--omega", type=float, default=1.0)
    args = ap.parse_args(argv)
    seg = make_curve("segment", {"p0": (0.0, 0.0, 0.0), "q0": (1.0, 0.0, 0.0)})
    bases = {"sphere": sphere_mesh(1.0, 4),
             "tube": tube_domain(seg, 0.2, MeshResolution(n_circ=8, h_max=0.2))}
    print("mesh,level,n_triangles,jump_residual,trace_residual")
    for name, base in bases.items():
        tau = default_offset(base)
        for lev in range(args.levels + 1):
            m = refine(base, lev) if lev else base
            j = jump_test(m, args.omega, field, tau)
            s = scalar_trace_test(m, args.omega, scalar, tau)
            print(f"{name},{lev},{m.n_triangles},{j:.6g},{s:.6g}")


if __name__ == "__main__":
    main()
