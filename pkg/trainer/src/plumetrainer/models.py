"""Segmentation architectures: U-Net over torchvision encoders, and a
compact SegNeXt-style network with multi-scale convolutional attention.

All models take a 3-channel [V, S, V] stack and emit single-channel logits
at input resolution. Encoders can start from ImageNet weights
(pretrained=True, needs the torchvision weight cache or network access) or
from random init, which is what the offline test suite uses.
"""

from __future__ import annotations

import torch
from torch import nn
from torchvision import models as tv_models

ARCHITECTURES = ("unet_mobilenetv2", "unet_resnet34", "segnext")


def build_model(architecture: str, pretrained: bool = False) -> nn.Module:
    if architecture == "unet_resnet34":
        return UnetResNet34(pretrained)
    if architecture == "unet_mobilenetv2":
        return UnetMobileNetV2(pretrained)
    if architecture == "segnext":
        return SegNeXtCompact()
    raise ValueError(f"unknown architecture {architecture!r} (choose from {ARCHITECTURES})")


class _ConvBlock(nn.Sequential):
    def __init__(self, in_ch: int, out_ch: int):
        super().__init__(
            nn.Conv2d(in_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
            nn.Conv2d(out_ch, out_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(out_ch),
            nn.ReLU(inplace=True),
        )


class _DecoderBlock(nn.Module):
    def __init__(self, in_ch: int, skip_ch: int, out_ch: int):
        super().__init__()
        self.conv = _ConvBlock(in_ch + skip_ch, out_ch)

    def forward(self, x, skip=None):
        x = nn.functional.interpolate(x, scale_factor=2, mode="nearest")
        if skip is not None:
            x = torch.cat([x, skip], dim=1)
        return self.conv(x)


class _Unet(nn.Module):
    """Shared U-Net decoder; subclasses provide encoder stage features."""

    decoder_channels = (256, 128, 64, 32, 16)

    def __init__(self, encoder_channels: tuple[int, ...]):
        # encoder_channels: deepest first, then skip channels (0 = no skip)
        super().__init__()
        blocks = []
        in_ch = encoder_channels[0]
        for skip_ch, out_ch in zip(encoder_channels[1:], self.decoder_channels):
            blocks.append(_DecoderBlock(in_ch, skip_ch, out_ch))
            in_ch = out_ch
        self.decoder = nn.ModuleList(blocks)
        self.head = nn.Conv2d(self.decoder_channels[-1], 1, 1)

    def encode(self, x) -> list[torch.Tensor]:  # deepest last
        raise NotImplementedError

    def forward(self, x):
        feats = self.encode(x)
        out = feats[-1]
        skips = feats[-2::-1] + [None]
        for block, skip in zip(self.decoder, skips):
            out = block(out, skip)
        return self.head(out)


class UnetResNet34(_Unet):
    def __init__(self, pretrained: bool = False):
        super().__init__((512, 256, 128, 64, 64, 0))
        weights = tv_models.ResNet34_Weights.IMAGENET1K_V1 if pretrained else None
        net = tv_models.resnet34(weights=weights)
        self.stem = nn.Sequential(net.conv1, net.bn1, net.relu)
        self.pool = net.maxpool
        self.layer1, self.layer2 = net.layer1, net.layer2
        self.layer3, self.layer4 = net.layer3, net.layer4

    def encode(self, x):
        x0 = self.stem(x)  # 64 ch, stride 2
        x1 = self.layer1(self.pool(x0))  # 64 ch, stride 4
        x2 = self.layer2(x1)  # 128 ch, stride 8
        x3 = self.layer3(x2)  # 256 ch, stride 16
        x4 = self.layer4(x3)  # 512 ch, stride 32
        return [x0, x1, x2, x3, x4]


class UnetMobileNetV2(_Unet):
    _stage_ends = (1, 3, 6, 13, 18)  # last block index at each stride level

    def __init__(self, pretrained: bool = False):
        super().__init__((1280, 96, 32, 24, 16, 0))
        weights = tv_models.MobileNet_V2_Weights.IMAGENET1K_V1 if pretrained else None
        self.features = tv_models.mobilenet_v2(weights=weights).features

    def encode(self, x):
        feats = []
        for i, layer in enumerate(self.features):
            x = layer(x)
            if i in self._stage_ends:
                feats.append(x)
        return feats


# ---------------------------------------------------------------------------
# Compact SegNeXt
# ---------------------------------------------------------------------------


class _MSCA(nn.Module):
    """Multi-scale convolutional attention: strip convolutions as attention."""

    def __init__(self, ch: int):
        super().__init__()
        self.proj = nn.Conv2d(ch, ch, 5, padding=2, groups=ch)
        self.strip7 = nn.Sequential(
            nn.Conv2d(ch, ch, (1, 7), padding=(0, 3), groups=ch),
            nn.Conv2d(ch, ch, (7, 1), padding=(3, 0), groups=ch),
        )
        self.strip11 = nn.Sequential(
            nn.Conv2d(ch, ch, (1, 11), padding=(0, 5), groups=ch),
            nn.Conv2d(ch, ch, (11, 1), padding=(5, 0), groups=ch),
        )
        self.mix = nn.Conv2d(ch, ch, 1)

    def forward(self, x):
        base = self.proj(x)
        attn = self.mix(base + self.strip7(base) + self.strip11(base))
        return attn * x


class _SegNeXtBlock(nn.Module):
    def __init__(self, ch: int):
        super().__init__()
        self.norm1 = nn.BatchNorm2d(ch)
        self.attn = _MSCA(ch)
        self.norm2 = nn.BatchNorm2d(ch)
        self.ffn = nn.Sequential(
            nn.Conv2d(ch, ch * 4, 1),
            nn.Conv2d(ch * 4, ch * 4, 3, padding=1, groups=ch * 4),
            nn.GELU(),
            nn.Conv2d(ch * 4, ch, 1),
        )

    def forward(self, x):
        x = x + self.attn(self.norm1(x))
        return x + self.ffn(self.norm2(x))


class SegNeXtCompact(nn.Module):
    """Small SegNeXt-flavoured net: MSCA stages + a light fusion decoder.

    Sized for toy datasets; trains from scratch (no pretrained variant).
    """

    def __init__(self, dims=(16, 32, 64, 128), depths=(1, 1, 2, 1)):
        super().__init__()
        self.stages = nn.ModuleList()
        in_ch = 3
        for dim, depth in zip(dims, depths):
            down = nn.Sequential(
                nn.Conv2d(in_ch, dim, 3, stride=2, padding=1),
                nn.BatchNorm2d(dim),
            )
            blocks = nn.Sequential(*[_SegNeXtBlock(dim) for _ in range(depth)])
            self.stages.append(nn.Sequential(down, blocks))
            in_ch = dim
        fuse_ch = 64
        self.proj = nn.ModuleList([nn.Conv2d(d, fuse_ch, 1) for d in dims[1:]])
        self.fuse = nn.Sequential(
            nn.Conv2d(fuse_ch * 3, fuse_ch, 3, padding=1, bias=False),
            nn.BatchNorm2d(fuse_ch),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Conv2d(fuse_ch, 1, 1)

    def forward(self, x):
        size = x.shape[-2:]
        feats = []
        for stage in self.stages:
            x = stage(x)
            feats.append(x)
        target = feats[1].shape[-2:]  # stride-4 grid
        fused = torch.cat(
            [
                nn.functional.interpolate(proj(f), size=target, mode="bilinear",
                                          align_corners=False)
                for proj, f in zip(self.proj, feats[1:])
            ],
            dim=1,
        )
        out = self.head(self.fuse(fused))
        return nn.functional.interpolate(out, size=size, mode="bilinear",
                                         align_corners=False)
