"""
Closed forms against linear solves and simulation
=================================================

Hitting probabilities and excursion local times of the birth-death chain
have closed forms in the potential.  Here they are compared with a banded
linear solve and with simulated excursions.
"""

from sinaiwalk.env_model import EnvDistribution, Environment
from sinaiwalk.exact_chain import (expected_local_time, hit_prob, oracle_expected_local_time,
                                   oracle_hit_prob, sandwich_bounds)
from sinaiwalk.walk_sim import excursion_local_time

env = Environment(EnvDistribution.uniform(0.3), seed=3)

# P_x[T_b < T_a] from the potential and from the tridiagonal system
a, x, b = -8, 0, 12
print("hit prob:", hit_prob(env, a, x, b), oracle_hit_prob(env, a, x, b))

# expected visits to x during an excursion from i
i, x = 0, 3
exact = expected_local_time(env, i, x)
print("local time:", exact, oracle_expected_local_time(env, i, x))

# the same quantity by simulating 10^5 excursions
est = excursion_local_time(env, 11, i, {x}, 10**5)
print(f"simulated: {est.mean:.4f} +- {est.stderr:.4f}")

# the value sits between bounds that only use the potential and eta0
lower, value, upper = sandwich_bounds(env, i, x)
print(f"{lower:.4f} <= {value:.4f} <= {upper:.4f}")
