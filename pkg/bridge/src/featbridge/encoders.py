"""Frozen encoder registry.

The real encoders need torch plus downloaded checkpoints; constructing one
without them raises a RuntimeError explaining what is missing. The "dummy"
encoder is a deterministic seeded stand-in with the same call contract, used
by the tests and for pipeline dry runs.
"""

from __future__ import annotations

import numpy as np


class EncoderUnavailableError(RuntimeError):
    pass


class Encoder:
    """Maps a (3, H, W) float image in [0, 1] to a (C, Hf, Wf) feature map."""

    name: str = "base"
    checkpoint: str = ""
    channels: int = 0

    def __call__(self, img3: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class DummyEncoder(Encoder):
    """Seeded random linear projections of 8x8 patches, softplus activated.

    Deterministic, checkpoint-free, and cheap; shaped like a ViT patch
    embedding (patch size 8) so the export path downstream is exercised the
    same way as with a real model.
    """

    name = "dummy"
    checkpoint = "none"
    patch = 8

    def __init__(self, channels: int = 32, seed: int = 0):
        self.channels = channels
        rng = np.random.default_rng(seed)
        self.proj = rng.normal(size=(channels, 3 * self.patch * self.patch))
        self.proj /= np.sqrt((self.proj**2).sum(axis=1, keepdims=True))

    def __call__(self, img3: np.ndarray) -> np.ndarray:
        c, h, w = img3.shape
        if c != 3:
            raise ValueError(f"expected 3 channels, got {c}")
        p = self.patch
        hp, wp = h // p, w // p
        if hp < 1 or wp < 1:
            raise ValueError(f"image {h}x{w} smaller than one {p}x{p} patch")
        patches = (
            img3[:, : hp * p, : wp * p]
            .reshape(3, hp, p, wp, p)
            .transpose(1, 3, 0, 2, 4)
            .reshape(hp * wp, 3 * p * p)
        )
        y = patches @ self.proj.T
        y = np.logaddexp(0.0, y)
        return y.T.reshape(self.channels, hp, wp)


def _require_torch(name: str):
    try:
        import torch  # noqa: F401
    except ImportError as exc:
        raise EncoderUnavailableError(
            f"encoder {name!r} needs torch; install featbridge[torch] and "
            f"download the checkpoint"
        ) from exc


class _TorchEncoder(Encoder):
    loader_hint = ""

    def __init__(self, checkpoint_path=None):
        _require_torch(self.name)
        if checkpoint_path is None:
            raise EncoderUnavailableError(
                f"encoder {self.name!r} needs the checkpoint "
                f"{self.checkpoint!r} ({self.loader_hint}); pass its path"
            )
        self._load(checkpoint_path)

    def _load(self, checkpoint_path):
        raise NotImplementedError


class DinoV2Encoder(_TorchEncoder):
    name = "dinov2_vitb14_reg"
    checkpoint = "dinov2_vitb14_reg"
    channels = 1024
    loader_hint = "torch.hub facebookresearch/dinov2"

    def _load(self, checkpoint_path):
        import torch

        self.model = torch.hub.load(
            "facebookresearch/dinov2", self.checkpoint, source="github"
        ).eval()

    def __call__(self, img3: np.ndarray) -> np.ndarray:
        import torch

        with torch.no_grad():
            x = torch.from_numpy(img3[None]).float()
            tokens = self.model.forward_features(x)["x_norm_patchtokens"]
        n = tokens.shape[1]
        side = int(round(n ** 0.5))
        return tokens[0].T.reshape(-1, side, side).cpu().numpy()


class SamEncoder(_TorchEncoder):
    name = "sam_vit_b_01ec64"
    checkpoint = "sam_vit_b_01ec64.pth"
    channels = 256
    loader_hint = "segment-anything image encoder weights"

    def _load(self, checkpoint_path):
        import torch
        from segment_anything import sam_model_registry

        sam = sam_model_registry["vit_b"](checkpoint=str(checkpoint_path))
        self.model = sam.image_encoder.eval()
        self._torch = torch

    def __call__(self, img3: np.ndarray) -> np.ndarray:
        with self._torch.no_grad():
            x = self._torch.from_numpy(img3[None]).float()
            return self.model(x)[0].cpu().numpy()


class MedSamEncoder(SamEncoder):
    name = "medsam_vit_b"
    checkpoint = "medsam_vit_b.pth"
    loader_hint = "MedSAM fine-tuned SAM weights"


REGISTRY = {
    cls.name: cls for cls in (DinoV2Encoder, SamEncoder, MedSamEncoder)
}


def get_encoder(name: str, checkpoint_path=None, **kwargs) -> Encoder:
    if name == "dummy":
        return DummyEncoder(**kwargs)
    if name not in REGISTRY:
        raise KeyError(f"unknown encoder {name!r}; known: "
                       f"{sorted(REGISTRY) + ['dummy']}")
    return REGISTRY[name](checkpoint_path)
