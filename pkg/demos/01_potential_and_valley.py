"""
The random potential and its basic valley
=========================================

A walk in a random environment behaves like a particle in the landscape
S_k = sum of log((1 - alpha_i) / alpha_i).  By time n it sits near the
bottom of the smallest valley around 0 whose walls rise log n + 12 log log n.
"""

import numpy as np

from sinaiwalk.env_model import EnvDistribution, Environment, Potential, check_hypotheses
from sinaiwalk.potential import find_basic_valley, gamma_n, window_bound

# two-point law: alpha is 0.3 or 0.7 with equal probability
law = EnvDistribution.two_point(0.3)
print(check_hypotheses(law, 1e-12))

# the environment is realized lazily, site by site, from a seed
env = Environment(law, seed=7)
pot = Potential.from_environment(env, -20, 20)
print("S on [-20, 20]:", np.round(pot.values, 2))

# the basic valley for n = 10^4
n = 10**4
bv = find_basic_valley(env, n)
print(f"gamma_n = {gamma_n(n):.3f}, window bound W = {window_bound(n, law.sigma)}")
print(f"basic valley: M' = {bv.m_prime}, m = {bv.m_n}, M = {bv.m_right}, depth = {bv.depth:.3f}")

# the valley reaches well beyond W, the scale (log n / sigma)^2
wide = Potential.from_environment(env, bv.m_prime, bv.m_right)
print(f"S at bottom {wide[bv.m_n]:.2f}, walls {wide[bv.m_prime]:.2f} and {wide[bv.m_right]:.2f}")
