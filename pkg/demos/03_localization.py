"""
Localization of the walk
========================

Run one long trajectory, then look at how much of its time falls in small
windows, where its favourite sites are, and how it relates to the basic
valley.
"""

from sinaiwalk import experiments as ex
from sinaiwalk.env_model import EnvDistribution, Environment
from sinaiwalk.potential import find_basic_valley
from sinaiwalk.walk_sim import Walker, concentration_radius, stats

law = EnvDistribution.two_point(0.3)
env = Environment(law, seed=7)
walker = Walker(env, walk_seed=11)

# advance in stages; the result does not depend on how the steps are split
for n in (10**3, 10**4, 10**5, 10**6):
    walker.advance(n - walker.step_count)
    fld = walker.field()
    st = stats(fld)
    k, center = concentration_radius(fld, 0.5, return_center=True)
    bv = find_basic_valley(env, n)
    bottom = bv.m_n if bv else None
    print(f"n={n:>8d} range=[{fld.min_site}, {fld.max_site}] favourites={st.favorites.tolist()} "
          f"Y_1/2={k} around {center}, valley bottom {bottom}")

# at these n the walk sits in a shallow trap of depth about log n; the basic
# valley, with walls log n + 12 log log n high, is far larger and the walk
# has not reached its bottom yet

# a small campaign: running minimum of Y over the schedule for 20 replicas
camp = ex.Campaign(law, ex.default_schedule(10**5), 20, [0.5, 0.9], seed=1)
rep = ex.probe_concentration(camp)
print(rep.summary)
print(rep.to_csv().splitlines()[:4])
