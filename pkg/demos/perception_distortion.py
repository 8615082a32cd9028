"""Trace the perception-distortion trade-off along reverse trajectories.

Averaged over repeated runs from one blurred measurement, the iterate's PSNR
peaks at an interior severity while the prior negative log-likelihood (the
perception proxy) keeps improving toward the end — stopping early optimizes
distortion, running to completion optimizes perceptual plausibility.
"""

from dirac.core import squared_exponential_prior
from dirac.degrade import GaussianBlurProcess
from dirac.denoise import OracleDenoiser
from dirac.sampler import SamplerConfig
from dirac.sdp import NoiseSchedule
from dirac.verify import perception_distortion_sweep


def main():
    shape = (8, 8)
    prior = squared_exponential_prior(shape)
    proc = GaussianBlurProcess(shape)
    noise = NoiseSchedule()
    oracle = OracleDenoiser(prior, proc, noise)

    config = SamplerConfig(delta_t=0.05, output_mode="final_iterate", seed=0)
    report = perception_distortion_sweep(oracle, proc, noise, prior, config,
                                         runs=30)

    print(f"{'t':>5} {'psnr':>7} {'nll':>9}")
    for t, p, n in zip(report.ts, report.psnr_mean, report.nll_mean):
        marker = "  <- distortion peak" if t == report.peak_t else ""
        print(f"{t:5.2f} {p:7.3f} {n:9.2f}{marker}")
    print(f"\npsnr peaks at t* = {report.peak_t:.2f} "
          f"(interior: {report.interior_peak})")
    print(f"nll at peak {report.peak_nll:.2f} -> final {report.final_nll:.2f} "
          f"(improves past peak: {report.nll_improves_past_peak})")


if __name__ == "__main__":
    main()
