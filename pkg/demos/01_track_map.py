# %% [markdown]
# # Building a track map
#
# A surveyed polyline becomes a look-up table indexed by distance along
# the track. Curvature comes from a spline fitted through an RDP-reduced
# subset of the survey points, then sampled back at every original point.

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from railpf.geometry import rdp_indices
from railpf.scenario import Segment, TrackSpec, generate_track
from railpf.track_map import build_map, lookup

# %% Survey a straight - clothoid - arc - clothoid - straight line with 2 cm noise.
spec = TrackSpec((Segment("straight", 300.0), Segment("clothoid", 80.0),
                  Segment("arc", 400.0, radius=600.0), Segment("clothoid", 80.0),
                  Segment("straight", 300.0)), spacing=2.0)
clean = generate_track(spec).points
rng = np.random.default_rng(0)
survey = clean + np.column_stack([rng.normal(0, 0.02, (len(clean), 2)), np.zeros(len(clean))])

# %% A spline through every point rings on the survey noise. RDP thins the
# points first; its tolerance should sit well above the noise level.
naive = build_map(survey, rdp_epsilon=0.0, max_knot_spacing=1e9)
arc = slice(250, 350)
for eps in (0.05, 0.2):
    m = build_map(survey, rdp_epsilon=eps)
    print(f"epsilon {eps:4.2f} m: RDP keeps {len(rdp_indices(survey, eps))} of {len(survey)} points, "
          f"arc kappa {m.column('kappa')[arc].mean():.5f} +- {m.column('kappa')[arc].std():.1e}")
print(f"all points:     arc kappa {naive.column('kappa')[arc].mean():.5f} +- "
      f"{naive.column('kappa')[arc].std():.1e} (design 1/600 = {1 / 600:.5f})")
track = build_map(survey, rdp_epsilon=0.2)

# %% Look-ups interpolate between stored rows.
f = lookup(track, 700.0)
print(f"d = 700 m: x = {f.p_x:.2f}, y = {f.p_y:.2f}, kappa = {f.kappa:.5f}, heading = {f.theta_z:.4f} rad")

# %%
fig, ax = plt.subplots(2, 1, figsize=(8, 6))
ax[0].plot(track.column("p_x"), track.column("p_y"), "k-")
ax[0].set_aspect("equal")
ax[0].set_title("track")
ax[1].plot(naive.d, naive.column("kappa"), lw=0.5, label="spline through all points")
ax[1].plot(track.d, track.column("kappa"), lw=1.5, label="RDP-reduced spline, epsilon 0.2 m")
ax[1].set_xlabel("d [m]")
ax[1].set_ylabel("kappa [1/m]")
ax[1].legend()
fig.tight_layout()
fig.savefig("01_track_map.png", dpi=100)
