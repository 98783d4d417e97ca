# %% [markdown]
# # IMU preprocessing
#
# Raw accelerometer readings carry gravity and a slowly drifting bias.
# Gravity is removed with the map's pitch and roll; the bias is learned
# whenever the train stands still.

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from railpf.imu import ImuPreprocessor
from railpf.scenario import Leg, ScenarioSpec, SensorSpec, TripSpec, build_scenario, curvy_track
from railpf.track_map import orientation_at

# %% A stopping service with a 0.02 m/s^2 accelerometer bias on the x axis.
spec = ScenarioSpec("stops", curvy_track(),
                    TripSpec(tuple(Leg(700.0, 12.0, 30.0) for _ in range(5)), start_dwell=30.0),
                    SensorSpec(accel_bias=(0.02, 0.01, 0.0)))
sc = build_scenario(spec, seed=3)

# %% Run the preprocessor alone, fed with the true track position.
pre = ImuPreprocessor(bias_min_samples=50)
still, bias = [], []
for k in range(len(sc.imu)):
    out = pre.process(sc.imu[k], orientation_at(sc.map, sc.truth.d[k]))
    still.append(out.standstill)
    bias.append(pre.bias.estimate("a_x"))
still, bias = np.array(still), np.array(bias)

truly_still = sc.truth.v == 0
print(f"stand-still detected on {still.mean():.1%} of samples, truth {truly_still.mean():.1%}")
# The detector looks back one window, so it lags departures by up to 1 s.
print(f"flagged while |v| >= 1 m/s: {np.count_nonzero(still & (np.abs(sc.truth.v) >= 1.0))}")
print(f"final a_x bias estimate {bias[-1]:.4f} m/s^2 (injected 0.02)")

# %%
fig, ax = plt.subplots(2, 1, figsize=(8, 5), sharex=True)
ax[0].plot(sc.truth.t, sc.truth.v)
ax[0].fill_between(sc.truth.t, 0, sc.truth.v.max(), where=still, color="0.85", label="ZVU")
ax[0].set_ylabel("v [m/s]")
ax[0].legend()
ax[1].plot(sc.truth.t, bias)
ax[1].axhline(0.02, color="k", ls="--")
ax[1].set_ylabel("bias a_x [m/s^2]")
ax[1].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig("02_imu_preprocessing.png", dpi=100)
