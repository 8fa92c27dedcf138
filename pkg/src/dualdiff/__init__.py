"""Dual-output denoising diffusion on toy data.

A denoiser predicts the noise, the clean sample and an interpolation weight r;
each backward step mixes the means implied by the two predictions with r.
"""
from .analysis import CurveSet, compare_paths_report, per_timestep_losses, sliced_wasserstein
from .denoiser import Denoiser, DenoiserParams, ModelOutput, init_params, oracle_denoiser
from .sampler import SamplerConfig, Trajectory, generate
from .schedule import Guard, NoiseSchedule, make_cosine, make_linear, respace

__version__ = "0.1.0"
