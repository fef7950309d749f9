"""Sweep the tangent-law coefficient gamma around gamma*.

Prints the continuous objective J(gamma) and the exact KL at N = 1024. Both
bottom out at gamma*, and J is convex in log gamma across the sweep.
"""

import numpy as np

from diffsched import asymptotics as asy
from diffsched.kl_engine import TimeGrid, exact_kl
from diffsched.schedule import tangent_schedule
from diffsched.spectrum import default_spectrum, gamma_star


def main():
    sp = default_spectrum(128)
    g_star = gamma_star(sp)
    grid = TimeGrid.uniform(1024)
    print(f"gamma* = {g_star:.6f}")
    print(f"{'gamma/gamma*':>12} {'J(gamma)':>12} {'KL(N=1024)':>12}")
    for f in np.geomspace(1 / 30, 30, 13):
        g = g_star * f
        print(f"{f:12.4f} {asy.objective_J_gamma(sp, g):12.5f} {exact_kl(tangent_schedule(g), grid, sp):12.4e}")


if __name__ == "__main__":
    main()
