# %% [markdown]
# # Particle filter during a GNSS outage
#
# Each particle is a distance along the track and a speed. Without GNSS
# the particles are weighted only by how well v*kappa and v^2*kappa match
# the measured yaw rate and lateral acceleration, so curves pin the
# along-track position down.

# %%
import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from railpf.config import derive_seed
from railpf.pf import FilterConfig, run_particle_filter
from railpf.scenario import build_scenario, preset_spec

# %% GNSS is lost for good at t = 50 s on the curvy line.
seed = 0
sc = build_scenario(preset_spec("curvy-indefinite"), derive_seed(seed, "scenario"))
res = run_particle_filter(sc.map, sc.imu, sc.gnss, FilterConfig(), seed=derive_seed(seed, "pf"))

d_hat = np.array([r.estimate.d for r in res])
sigma_d = np.array([r.estimate.sigma_d for r in res])
n_eff = np.array([r.n_eff for r in res])
err = d_hat - sc.truth.d
kappa = sc.truth.kappa

for t_check in (50, 80, 120, 200, 300):
    k = np.searchsorted(sc.truth.t, t_check)
    print(f"t = {t_check:3d} s: along-track error {err[k]:+6.2f} m, sigma_d {sigma_d[k]:5.2f} m")

# %%
fig, ax = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
ax[0].plot(sc.truth.t, err, label="error")
ax[0].fill_between(sc.truth.t, -3 * sigma_d, 3 * sigma_d, color="0.85", label="3 sigma_d")
ax[0].axvline(50, color="k", ls="--")
ax[0].set_ylabel("d error [m]")
ax[0].legend()
ax[1].plot(sc.truth.t, kappa)
ax[1].set_ylabel("kappa [1/m]")
ax[2].plot(sc.truth.t, n_eff)
ax[2].set_ylabel("N_eff")
ax[2].set_xlabel("t [s]")
fig.tight_layout()
fig.savefig("03_particle_filter.png", dpi=100)
