"""Differentiable fisheye panorama stitching (C++ core)."""

from ._panostitch import (  # noqa: F401
    DomainError,
    Scene,
    __version__,
    config_defaults,
    evaluate,
    gradcheck,
    make_scene,
    read_image,
    read_scene,
    run_cli,
    ssim,
    stitch,
    synthetic_panorama,
    write_png,
    write_wssf,
)
