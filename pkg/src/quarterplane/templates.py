"""Named model families used by sweeps, scripts and the command line."""
from __future__ import annotations

from .model import (ModelError, PolicyParams, build_ldgps_model, build_policy_model, build_ra_model,
                    ra_example_model, ra_region_model)


def _ra_example(lam, a=0.6, N=2):
    return ra_example_model(float(lam), float(a), int(N))


def _ra_region(cap1, cap2, N=2, base1=0.2, base2=0.5, a1=0.8, a2=0.6):
    return ra_region_model(float(cap1), float(cap2), int(N), float(base1), float(base2), float(a1),
                           float(a2))


def _ra_geometric(lam1, lam2, r1, r2, N1=2, N2=2):
    return build_ra_model(float(lam1), float(lam2), int(N1), int(N2), r1=float(r1), r2=float(r2))


def _ldgps(lam1, lam2, mu1, mu2, th1=0.0, th2=0.0, beta1=0.5, N1=2, N2=2):
    b = float(beta1)
    return build_ldgps_model(float(lam1), float(lam2), float(mu1), float(mu2), float(th1), float(th2),
                             lambda n1, n2: b, int(N1), int(N2))


def _policy(policy, lam1, lam2, mu1, mu2, N1=2, N2=2, L=1, beta=0.5):
    pp = PolicyParams(str(policy), L=int(L), beta=float(beta))
    return build_policy_model(pp, (float(lam1), float(lam2)), (float(mu1), float(mu2)), int(N1), int(N2))


TEMPLATES = {
    "ra-example": _ra_example,
    "ra-region": _ra_region,
    "ra-geometric": _ra_geometric,
    "ldgps": _ldgps,
    "policy": _policy,
}


def build_template(name, params: dict):
    try:
        fn = TEMPLATES[name]
    except KeyError:
        raise ModelError(f"unknown template {name!r}; choose from {sorted(TEMPLATES)}") from None
    try:
        return fn(**params)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {name}: {exc}") from None
