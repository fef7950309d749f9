"""The tangent law at gamma* against common schedules, all on uniform t-grids.

For large enough N the tangent schedule tuned to the spectrum via
gamma* = sqrt(tr Sigma / tr Sigma^-1) gives the smallest KL of the five.
"""

from diffsched.kl_engine import TimeGrid, exact_kl
from diffsched.schedule import DDPMLinear, FlowLinear, VEGeometric, VPCosine, tangent_schedule
from diffsched.spectrum import default_spectrum, gamma_star


def main():
    sp = default_spectrum(128)
    g = gamma_star(sp)
    scheds = {
        f"tangent(gamma*={g:.4f})": tangent_schedule(g),
        "vp_cosine": VPCosine(),
        "ve_geometric": VEGeometric(),
        "ddpm_linear": DDPMLinear(),
        "flow_linear": FlowLinear(),
    }
    ns = [16, 64, 256, 1024]
    print(f"{'schedule':<26}" + "".join(f"{'N=' + str(n):>13}" for n in ns))
    for name, sch in scheds.items():
        row = [exact_kl(sch, TimeGrid.uniform(n), sp) for n in ns]
        print(f"{name:<26}" + "".join(f"{v:13.4e}" for v in row))


if __name__ == "__main__":
    main()
