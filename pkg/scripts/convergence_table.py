"""Consistency ratios and fitted convergence orders for the shipped integrators.

    python3 scripts/convergence_table.py --spec harmonic --levels 6
"""

import argparse

from hamadv.diagnostics import consistency_probe
from hamadv.integrators import shipped_methods
from hamadv.phase import BumpPotential, FreeParticle, Harmonic, PhasePoint, SeparableBump

SPECS = {
    "free": (FreeParticle(), PhasePoint.planar(0.0, 1.0)),
    "harmonic": (Harmonic(1.0), PhasePoint.planar(1.0, 0.0)),
    "bump": (SeparableBump(BumpPotential.single(0.0, 1.0, 0.4)), PhasePoint.planar(-0.3, 1.0)),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--spec", choices=sorted(SPECS), default="harmonic")
    ap.add_argument("--dt0", type=float, default=0.1)
    ap.add_argument("--levels", type=int, default=4)
    args = ap.parse_args()

    spec, x = SPECS[args.spec]
    dts = [args.dt0 / 2**k for k in range(args.levels)]
    print("method".ljust(28) + "".join(f"{h:>11.4g}" for h in dts) + "   order  pass")
    for m in shipped_methods():
        rep = consistency_probe(m, spec, x, dts)
        ratios = "".join(f"{r:>11.3e}" for r in rep.ratios)
        print(f"{m.name:28}{ratios}   {rep.order:5.2f}  {rep.passed}")


if __name__ == "__main__":
    main()
