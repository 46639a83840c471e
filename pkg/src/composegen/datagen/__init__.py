from composegen.datagen.scenes import SceneSpec, Scene, generate_scene, UnsatisfiableSceneError
from composegen.datagen.perturb import (
    PerturbationSpec,
    Homography,
    DegenerateCorrespondenceError,
    perturb_four_points,
    homography_from_correspondences,
    color_jitter,
    apply_hsv_jitter,
)
from composegen.datagen.warp import warp_and_rotate, EmptyWarpResultError
from composegen.datagen.triplets import (
    TrainingTriplet,
    AugmentationSpec,
    make_training_triplet,
    crop_shift_augment,
    apply_crop_window,
)
from composegen.datagen.dataset import write_dataset, read_dataset, ManifestError

__all__ = [
    "SceneSpec",
    "Scene",
    "generate_scene",
    "UnsatisfiableSceneError",
    "PerturbationSpec",
    "Homography",
    "DegenerateCorrespondenceError",
    "perturb_four_points",
    "homography_from_correspondences",
    "color_jitter",
    "apply_hsv_jitter",
    "warp_and_rotate",
    "EmptyWarpResultError",
    "TrainingTriplet",
    "AugmentationSpec",
    "make_training_triplet",
    "crop_shift_augment",
    "apply_crop_window",
    "write_dataset",
    "read_dataset",
    "ManifestError",
]
