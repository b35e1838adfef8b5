"""Safety ellipse walk-through for one follower/leader pair."""
# %%
import math

from lanefree import geometry as g
from lanefree.geometry import EllipseAxes, GeometryParams
from lanefree.vehicle import VehicleState

params = GeometryParams()  # d0 = length + 1 m, width + 0.3 m for a 3.2 x 1.8 m car
print(params)

# %% The longitudinal axis grows with speed and with the closing speed on the leader.
for v_f, v_l in [(30, 30), (30, 34), (34, 30)]:
    print(f"follower {v_f} m/s, leader {v_l} m/s -> e_b = {g.semi_major(v_f, v_f, v_l, params):.2f} m")

# %% The lateral axis widens only while the two cars close in sideways.
e_b = g.semi_major(30, 30, 30, params)
print("steady:", g.semi_minor(2.0, 2.0, 10.0, e_b, params))
print("closing 0.1 m in one step:", round(g.semi_minor(1.9, 2.0, 10.0, e_b, params), 4))

# %% Put a leader 12 m ahead and 1.5 m to the left and look at the construction.
follower = VehicleState(id=0, x=0.0, y=0.0, v_lon=30.0, v_des=33.0)
leader = VehicleState(id=1, x=12.0 + 1.6, y=1.5 + 0.9, v_lon=28.0)
a = g.nearest_point(follower, leader)
axes = EllipseAxes(g.semi_major(30.0, 30.0, 28.0, params), params.d0_lat)
pg = g.pair_geometry((0.0, 0.0), a, axes)
print(f"A = {a}, beta = {math.degrees(pg.beta):.1f} deg, B = ({pg.b[0]:.2f}, {pg.b[1]:.2f})")
print(f"q = {pg.q:.3f}, intrusion = {pg.int_per:.3f}  (closed form 1 - sqrt(q) = {1 - math.sqrt(pg.q):.3f})")

# %% Repulsion acts on the follower, the nudge on the leader.
rep, nud = g.pair_forces(follower, leader, params)
print(f"repulsion on follower {rep:.3f}, nudge on leader {nud:.3f}")
