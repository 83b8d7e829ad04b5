"""Direct inversion of the structure function versus the likelihood estimator.

The direct-inversion baseline solves D = A (1 - exp(-q^2 theta / 4)) + B for
theta separately at every (ring, lag) and takes medians across rings.  It is
fast and accurate at short lags but loses valid entries and precision as the
structure function saturates, while the likelihood estimator keeps borrowing
strength across rings and lags.  A confined (plateauing) process shows the
long-lag contrast.
"""

import numpy as np

from msdlab import (
    OrnsteinUhlenbeckModel,
    RenderSpec,
    ddm_uq_baseline,
    fft_stack,
    optimize,
    rmse_log10,
    simulate_stack,
    structure_function,
    true_msd,
)
from msdlab.estimator import select_rings, subsample_q
from msdlab.spectral import amplitude_estimate

model = OrnsteinUhlenbeckModel(sigma2=36.0, rho=0.92)
print("simulate a confined process: plateau at sigma2 =", model.sigma2)
stack, _ = simulate_stack(
    model, m=40, n1=128, n2=128, n=128, dt_min=1.0,
    spec=RenderSpec(noise_b=0.02, rng_seed=3), seed=3,
)

print("direct-inversion baseline over all lags")
spectrum = fft_stack(stack)
sf = structure_function(spectrum, lags=np.arange(1, spectrum.n))
j0, _ = select_rings(amplitude_estimate(spectrum, 0.0))
rings = subsample_q(j0, 20, 0.95)
base = ddm_uq_baseline(sf, spectrum, selected_rings=rings)
print(f"   noise floor estimate B = {base.b:.4g}")
print(f"   lags with >= 3 valid rings: {len(base.msd)} of {spectrum.n - 1}")

print("likelihood estimator over the full lag range")
est = optimize(stack, threads=2)
truth = true_msd(model, est.msd.lag_time)
rmse, _ = rmse_log10(est.msd, truth)
print(f"   RMSE(log10) over all lags: {rmse:.4f}")

print("plateau recovery at the last decade of lags:")
tail = est.msd.lag_time >= est.msd.lag_time[-1] / 10
print(f"   likelihood mean: {est.msd.msd[tail].mean():8.3f}  (truth -> {model.sigma2})")
reported_tail = base.msd.lag_time >= est.msd.lag_time[-1] / 10
if reported_tail.any():
    print(f"   baseline mean:   {base.msd.msd[reported_tail].mean():8.3f} "
          f"over {reported_tail.sum()} reported lags")
else:
    print("   baseline: no valid entries that far out")
