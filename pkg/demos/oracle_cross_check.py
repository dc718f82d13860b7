"""Two independent engines for the same flow.

The root engine moves the zeros and poles of f' with closed-form velocities.
The spectral engine never looks at zeros: it samples q/|f'|^2 on the
circle, builds P by FFT and integrates the Taylor coefficients of f.  If
both agree to 1e-7 the velocity formulas and their implementation are
right.
"""
import numpy as np

from hele_shaw import RunConfig, SpectralState, UnderResolved, cross_validate, run_oracle, run_simulation
from hele_shaw.gallery import cardioid_map, huntingford_map, offcenter_disk_map


def compare(name, rd, t0, t1, **kw):
    traj = run_simulation(RunConfig(rd, t_span=(t0, t1), sample_dt=0.05, **kw))
    states = run_oracle(SpectralState.from_map(rd, t0, N=64), t1, 0.05)
    rep = cross_validate(traj, states)
    print(f"{name:<12} samples {len(rep.times):3d}  max coeff diff {rep.max_coeff_diff:.1e}"
          f"  max zero diff {rep.max_zero_diff:.1e}  passed {rep.passed}")
    return rep


def main():
    compare("cardioid", cardioid_map(0.0), 0.0, 0.5)
    compare("huntingford", huntingford_map(0.1), 0.1, 0.6, collision_continuation=True)
    compare("off-center", offcenter_disk_map(3.0), 0.0, 0.3)
    # a pole at 3 makes a_k decay like 3^-k: 16 terms leave a visible tail
    for N in (16, 40):
        try:
            states = run_oracle(SpectralState.from_map(offcenter_disk_map(3.0), N=N), 0.3, 0.1)
        except UnderResolved as exc:
            print(f"N = {N}: {exc}")
            continue
        tail = np.abs(states[-1].coeffs.coeffs[-4:]).max()
        print(f"N = {N}: final order {states[-1].N}, coefficient tail {tail:.1e}")


if __name__ == "__main__":
    main()
