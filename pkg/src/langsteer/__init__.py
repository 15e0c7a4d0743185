"""Shared-autonomy teleoperation workbench.

Trains language-conditioned latent-action autoencoders from scripted
demonstrations and drives simulated robots through the learned low-DoF
control spaces, alongside imitation-learning and end-effector-control
baselines and the measurement tooling to compare them.

The package splits into:

* ``nn``          from-scratch MLP + feature-wise-modulation engine
* ``models``      encoder/decoder/policy bundles, training, calibration
* ``language``    embeddings, exemplar retrieval, annotator filtering
* ``demos``       scripted demonstrations and both augmentations
* ``sim``         cross world and planar-arm world, kinematics, subtasks
* ``control``     controllers, scripted operators, jerk, jitter study
* ``experiments`` the paper-level experiment recipes
* ``service``     deterministic wire-protocol session core
* ``server``      websocket/static transport
* ``cli``         the langsteer command line
"""

from . import control, demos, experiments, language, models, nn, sim

__version__ = "0.1.0"

__all__ = ["control", "demos", "experiments", "language", "models", "nn", "sim",
           "__version__"]
