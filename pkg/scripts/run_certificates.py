"""Generate adversarial certificates for every shipped integrator and print a verdict table.

    python3 scripts/run_certificates.py --dt 0.1 0.05 --out certificates/
"""

import argparse
import json
from pathlib import Path

from hamadv.adversary import ConstructionParams, generate_certificate
from hamadv.integrators import IntegratorConfig, shipped_methods


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dt", type=float, nargs="+", default=[0.1])
    ap.add_argument("--lam", type=float, default=0.25)
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--out", type=Path, default=None, help="write one JSON certificate per run here")
    args = ap.parse_args()

    methods = shipped_methods() + [IntegratorConfig("step_and_project", base="rk4")]
    print(f"{'method':28} {'dt':>6} {'c':>5} {'mismatch':>10} {'lag bound':>10}  verdict")
    for dt in args.dt:
        for m in methods:
            cert = generate_certificate(m, ConstructionParams(dt=dt, lam=args.lam, threads=args.threads))
            mism = "-" if cert.mismatch is None else f"{cert.mismatch:.3e}"
            lag = "-" if cert.lag_lower_bound is None else f"{cert.lag_lower_bound:.3e}"
            c = "-" if cert.c is None else f"{cert.c:g}"
            print(f"{m.name:28} {dt:>6g} {c:>5} {mism:>10} {lag:>10}  {cert.verdict.failed_property}")
            if args.out is not None:
                args.out.mkdir(parents=True, exist_ok=True)
                path = args.out / f"{m.name}_dt{dt:g}.json"
                path.write_text(json.dumps(cert.to_json(), indent=2, allow_nan=False) + "\n")


if __name__ == "__main__":
    main()
