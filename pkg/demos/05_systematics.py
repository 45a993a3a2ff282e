"""Two systematic effects: detection loss and pump fluctuations.

Loss after the amplifier barely changes the recovered squeezing, because
the signal is already amplified far above the vacuum level.  Shot-to-shot
pump fluctuations add a common-mode intensity correlation that inflates
the leading reconstructed weight.

Run: python demos/05_systematics.py
"""
from multisqueeze.config import ExperimentConfig
from multisqueeze.frame_synth import AcquisitionConfig, acquire_ensemble
from multisqueeze.gaussian_core import Fringe
from multisqueeze.pipeline import build_model
from multisqueeze.recon import decompose, estimate_covariance

model = build_model(ExperimentConfig(), Fringe.BRIGHT)


def leading_weight(**acq):
    ens = acquire_ensemble(model, AcquisitionConfig(1500, Fringe.BRIGHT, seed=0, **acq))
    subtract = acq.get("shot_noise", False)
    return decompose(estimate_covariance(ens, subtract_shot_noise=subtract), 12).weights[0]


print(f"lossless detection      lambda_0 = {leading_weight():.4f}")
print(f"transmission 0.5 + shot lambda_0 = {leading_weight(detection_eta=0.5, shot_noise=True):.4f}")
for p in (0.05, 0.1, 0.2, 0.3):
    print(f"pump rel. std {p:4.2f}      lambda_0 = {leading_weight(pump_rel_std=p):.4f}")
