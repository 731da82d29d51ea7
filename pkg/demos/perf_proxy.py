"""Low-precision flop share and time ratio per benchmark and variant.

Uses the symbolic flop model; gamma < 1 is the per-step saving, which only
turns into a real gain when beta (step-count ratio) stays near one.
"""
from mixedstep.metrics import gamma_of, rho_fraction, rho_limit
from mixedstep.systems import make_cc, make_kuramoto, make_lco, flop_profile

R = 0.5
systems = {
    "lco": make_lco(2),
    "kuramoto": make_kuramoto(2, 0.5, 1.0),
    "cc": make_cc(2, 1.0, 0.228249),
}

print(f"{'benchmark':<10}{'variant':<8}{'rho(N=100)':>12}{'rho(inf)':>10}{'gamma(inf)':>12}")
for name, sys_ in systems.items():
    fp = flop_profile(sys_)
    for v in ("mixed1", "mixed2", "single"):
        lim = rho_limit(v, fp)
        print(f"{name:<10}{v:<8}{rho_fraction(v, fp, 100):12.3f}{lim:10.3f}{gamma_of(lim, R):12.3f}")
