"""Ready-made configurations: the desk-scale training setup and a reduced
setup for the module-ablation grids."""

from __future__ import annotations

from .geometry import TomogramDims
from .model import ModelConfig
from .sim import ArtifactConfig, ClassSpec, PromptSpec, SimConfig
from .train import DenoisingConfig, TrainConfig


def desk_sim_light() -> SimConfig:
    """Artifact-light regime: near-clean renders, mild illumination drift."""
    return SimConfig(
        dims=TomogramDims(64, 64, 64),
        tilt_min=-60.0, tilt_max=60.0, tilt_step=3.0,
        particles_per_scene=(3, 7),
        classes=(
            ClassSpec(1, 9.0, 13.0, "disc"),
            ClassSpec(2, 11.0, 15.0, "ring"),
        ),
        central_plane_bias=0.08,
        artifact=ArtifactConfig(
            occlusion_prob=0.0,
            occlusion_width=(0.0, 0.0),
            illum_order=1,
            illum_amplitude=(0.0, 0.15),
            noise_sigma=0.02,
        ),
    )


def desk_sim_heavy() -> SimConfig:
    """Artifact-heavy regime: noise, occlusion bands, strong illumination."""
    light = desk_sim_light()
    return SimConfig(
        dims=light.dims,
        tilt_min=light.tilt_min, tilt_max=light.tilt_max, tilt_step=light.tilt_step,
        particles_per_scene=light.particles_per_scene,
        classes=light.classes,
        central_plane_bias=light.central_plane_bias,
        artifact=ArtifactConfig(
            occlusion_prob=0.25,
            occlusion_width=(4.0, 12.0),
            illum_order=2,
            illum_amplitude=(0.1, 0.4),
            noise_sigma=0.15,
        ),
    )


def desk_train(seed: int = 0) -> TrainConfig:
    """The default desk-scale run: c=64, 3 layers everywhere, 100 queries,
    64^3 volumes, 41 tilts, 2 classes, 200 scenes/epoch, 30 epochs."""
    return TrainConfig(
        regime_a=desk_sim_light(),
        regime_b=desk_sim_heavy(),
        model=ModelConfig(seed=seed),
        epochs=30,
        scenes_per_epoch=200,
        seed=seed,
        prompt_spec=PromptSpec(
            count_range=(1, 2),
            fraction_choices=(1.0, 0.5, 0.25, 0.125),
            zero_tilt_prob=0.2,
        ),
        denoising=DenoisingConfig(),
    )


def mini_sim_light() -> SimConfig:
    """Reduced-scale regime for ablation grids. Deliberately low SNR: with
    clean renders, single-image detection suffices and cross-tilt fusion
    earns nothing, which is the opposite of the data this architecture is
    built for."""
    return SimConfig(
        dims=TomogramDims(32, 32, 32),
        tilt_min=-60.0, tilt_max=60.0, tilt_step=6.0,
        particles_per_scene=(2, 4),
        classes=(
            ClassSpec(1, 6.0, 8.0, "disc"),
            ClassSpec(2, 7.0, 9.0, "ring"),
        ),
        central_plane_bias=0.08,
        artifact=ArtifactConfig(illum_order=1, illum_amplitude=(0.0, 0.1),
                                noise_sigma=0.15),
    )


def mini_sim_heavy() -> SimConfig:
    light = mini_sim_light()
    return SimConfig(
        dims=light.dims,
        tilt_min=light.tilt_min, tilt_max=light.tilt_max, tilt_step=light.tilt_step,
        particles_per_scene=light.particles_per_scene,
        classes=light.classes,
        central_plane_bias=light.central_plane_bias,
        artifact=ArtifactConfig(
            occlusion_prob=0.25,
            occlusion_width=(2.0, 7.0),
            illum_order=2,
            illum_amplitude=(0.1, 0.35),
            noise_sigma=0.35,
        ),
    )


def mini_model(seed: int = 0, **toggles) -> ModelConfig:
    return ModelConfig(c=32, l_aa=2, l_vp=2, l_d=2, m=40, n_levels=2, strides=(4, 8),
                       n_heads=4, n_points=4, seed=seed, **toggles)


def mini_train(seed: int = 0, epochs: int = 6, scenes_per_epoch: int = 60) -> TrainConfig:
    """Reduced budget for the ablation grids: 32^3 volumes, 21 tilts."""
    return TrainConfig(
        regime_a=mini_sim_light(),
        regime_b=mini_sim_heavy(),
        model=mini_model(seed),
        epochs=epochs,
        scenes_per_epoch=scenes_per_epoch,
        seed=seed,
        prompt_spec=PromptSpec(
            count_range=(1, 2),
            fraction_choices=(1.0, 0.5, 0.25, 0.125),
            zero_tilt_prob=0.2,
        ),
        denoising=DenoisingConfig(),
    )
