"""Two real zeros outside the disk: the product always grows.

With w1 < w2 real, the scaled log-velocities are alpha +- beta (w1 w2 - 3)/(w2 - w1).
Their sum is positive, so w1 w2 increases.  Their difference changes sign at
w1 w2 = 3: below the threshold the zeros spread apart in ratio, above it the
ratio w2/w1 shrinks, which is how two real zeros come together and collide.
"""
from hele_shaw import RationalDerivative, RunConfig, repulsion_predicates, run_simulation
from hele_shaw.dynamics import SimState
from hele_shaw.gallery import two_real_roots_fields


def main():
    print("   w1    w2   w1w2   alpha      beta     d(w2/w1)/dt sign  (integrated)")
    for w1, w2 in [(1.2, 2.0), (1.5, 2.0), (1.5, 2.5), (2.0, 3.0), (1.1, 5.0)]:
        f = two_real_roots_fields(w1, w2)
        rd = RationalDerivative.from_roots([w1, w2])
        traj = run_simulation(RunConfig(rd, t_span=(0, 1e-3), sample_dt=1e-3))
        z = sorted(traj.samples[-1].state.rd.zeros.real)
        drift = z[1] / z[0] - w2 / w1
        print(f"  {w1:4.1f}  {w2:4.1f}  {w1 * w2:5.2f}  {f.alpha:.5f}  {f.beta:.5f}"
              f"  {f.ratio_rate_sign:+d}                 {drift:+.2e}")
    rep = repulsion_predicates(SimState(0.0, RationalDerivative.from_roots([2.0, 3.0])))
    print("\npredicates at (2, 3):", rep.predicates)


if __name__ == "__main__":
    main()
