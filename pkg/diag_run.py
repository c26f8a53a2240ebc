import math, time, pathlib
from helmproof.modelfile import parse_model, parse_scenario, initial_state
from helmproof.state import lens_get

def gv(st, name):
    return lens_get(st, st.space.lens(name)).data
from helmproof.sim import SimConfig, run_loop
root = pathlib.Path("src/helmproof/models")
model = parse_model((root / "amv_sim.hp").read_text())
scn = parse_scenario((root / "default.scn").read_text(), model)

ctrl = model.programs["ctrl_far"]
dyn = model.programs["dyn"]
cfg = SimConfig(dt=scn.dt, epsilon=scn.epsilon, horizon=scn.horizon)

t0 = time.perf_counter()
tr = run_loop(ctrl, dyn, initial_state(model, scn), cfg)
wall = time.perf_counter() - t0

print(f"wall = {wall:.3f} s   samples = {len(tr.samples)}")
for ev in tr.events:
    print(f"  event t={ev[0]:.3f}  {ev[1]}")

# closest approach to wp=[0,0]
best = min(tr.samples, key=lambda s: math.hypot(gv(s[1], "p")[0], gv(s[1], "p")[1]))
bt = best[0]
bd = math.hypot(gv(best[1], "p")[0], gv(best[1], "p")[1])
print(f"closest approach to wp: {bd:.3f} m at t={bt:.2f}")

# first sample with dwp <= 1
for tt, s in tr.samples:
    p = gv(s, "p")
    if math.hypot(p[0], p[1]) <= 1.0:
        print(f"reaches 1 m at t={tt:.2f}")
        break
else:
    print("never reaches 1 m")

# speed monotone after first mode switch out of MOM
sw = next((ev[0] for ev in tr.events if "MOM ->" in ev[1]), None)
print(f"first switch out of MOM: t={sw}")
if sw is not None:
    after = [(tt, s) for tt, s in tr.samples if tt >= sw]
    speeds = [math.hypot(gv(s, "v")[0], gv(s, "v")[1]) for tt, s in after]
    run = 0
    t_at = [tt for tt, s in after]
    for i in range(1, len(speeds)):
        if speeds[i] <= speeds[i - 1] + 1e-12:
            run = i
        else:
            break
    print(f"speed at switch {speeds[0]:.3f}, monotone-decreasing until t={t_at[run]:.2f} "
          f"({t_at[run]-sw:.2f} s), speed there {speeds[run]:.3f}")

# occ_far angle conjunct along the trajectory (anomaly check)
ob = (-12.0, -18.0)
hits = []
for t, s in tr.samples:
    p = gv(s, "p"); v = gv(s, "v")
    sp = math.hypot(v[0], v[1])
    if sp < 1e-9:
        continue
    dAO = math.hypot(ob[0]-p[0], ob[1]-p[1])
    dsb = (5.0/6.0)*sp*sp
    # compass angles: ang(x, y) = atan2(x, y)
    bear = math.atan2(ob[0]-p[0], ob[1]-p[1])
    head = math.atan2(v[0], v[1])
    phiAO = (bear - head + math.pi) % (2*math.pi) - math.pi
    if phiAO <= -math.pi:
        phiAO += 2*math.pi
    far = dAO > dsb
    if far and abs(phiAO) < 0.3:
        hits.append((t, dAO, dsb, phiAO))
print(f"occ_far true at {len(hits)} samples")
for t, dAO, dsb, phiAO in hits[:10]:
    print(f"  t={t:.2f} dAO={dAO:.2f} dsb={dsb:.2f} phiAO={phiAO:+.3f}")
if hits:
    print("  ... last:", f"t={hits[-1][0]:.2f}")
