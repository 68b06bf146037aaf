#!/usr/bin/env python3
"""Regenerate the bundled network description files in src/specprune/nets/.

The VGG16 description is a plain sequential chain.  ResNet-56 and
DenseNet-40 contain residual/dense connectivity the pruning engine does not
model, so they are emitted as count-only graph descriptions: a flat list of
countable layers with explicit shape annotations.  Their residual adds and
concatenations cost no multiply-adds and no parameters, so omitting them
does not change the counts.

ResNet-56 follows the CIFAR family (16/32/64 channels, nine basic blocks
per stage) with the projection shortcuts at the two stage transitions
realized as stride-2 3x3 convolutions; that variant is the one consistent
with the published parameter totals for both ResNet-56 (0.88M) and
ResNet-110 (1.75M) that these files are checked against.

DenseNet-40 is the growth-12, three-block variant with a 24-channel stem
(final feature width 24 + 3*12*12 = 456) and uncompressed transitions;
pre-activation batchnorms are listed as standalone entries because they
normalize the concatenated inputs, not the conv outputs.
"""

import os

HERE = os.path.dirname(os.path.abspath(__file__))
NETS = os.path.join(HERE, "..", "src", "specprune", "nets")


def vgg16() -> str:
    lines = [
        "# VGG16 for 32x32 RGB inputs: 13 batchnorm conv layers, 512-512-10 classifier.",
        "input 3 32 32",
    ]
    plan = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M", 512, 512, 512, "M", 512, 512, 512, "M"]
    for item in plan:
        if item == "M":
            lines.append("maxpool k=2 stride=2")
        else:
            lines.append(f"conv out={item} k=3 stride=1 pad=1 bias=1 bn=1 act=relu")
    lines += [
        "flatten",
        "linear out=512 bias=1 act=relu",
        "linear out=10 bias=1 act=none",
    ]
    return "\n".join(lines) + "\n"


def resnet56() -> str:
    lines = [
        "# ResNet-56 for 32x32 RGB inputs (count-only graph description).",
        "# Basic blocks, 9 per stage at widths 16/32/64; stage-transition",
        "# projection shortcuts are stride-2 3x3 convolutions.  Residual adds",
        "# carry no multiply-adds or parameters and are omitted.",
        "graph",
        "input 3 32 32",
        "conv in=3 out=16 k=3 stride=1 pad=1 hin=32 win=32 bias=0 bn=1 act=relu",
    ]
    stages = [(16, 16, 32), (16, 32, 16), (32, 64, 8)]
    for stage, (c_in, c_out, hw) in enumerate(stages):
        for block in range(9):
            first = block == 0 and stage > 0
            if first:
                hw_in = hw * 2
                lines.append(
                    f"conv in={c_in} out={c_out} k=3 stride=2 pad=1 hin={hw_in} win={hw_in} bias=0 bn=1 act=relu"
                )
                lines.append(
                    f"conv in={c_out} out={c_out} k=3 stride=1 pad=1 hin={hw} win={hw} bias=0 bn=1 act=relu"
                )
                lines.append(
                    f"# projection shortcut {c_in}->{c_out}"
                )
                lines.append(
                    f"conv in={c_in} out={c_out} k=3 stride=2 pad=1 hin={hw_in} win={hw_in} bias=0 bn=1 act=none"
                )
            else:
                src = c_out if (block > 0 or stage > 0) else c_in
                lines.append(
                    f"conv in={src} out={c_out} k=3 stride=1 pad=1 hin={hw} win={hw} bias=0 bn=1 act=relu"
                )
                lines.append(
                    f"conv in={c_out} out={c_out} k=3 stride=1 pad=1 hin={hw} win={hw} bias=0 bn=1 act=none"
                )
    lines += [
        "avgpool k=8 stride=8",
        "flatten",
        "linear in=64 out=10 bias=1 act=none",
    ]
    return "\n".join(lines) + "\n"


def densenet40() -> str:
    lines = [
        "# DenseNet-40 (growth 12, three 12-layer blocks, 24-channel stem,",
        "# uncompressed transitions); count-only graph description.  Each dense",
        "# layer's pre-activation batchnorm normalizes the concatenated input,",
        "# so batchnorms appear as standalone entries.  Concatenations carry no",
        "# multiply-adds or parameters and are omitted.",
        "graph",
        "input 3 32 32",
        "conv in=3 out=24 k=3 stride=1 pad=1 hin=32 win=32 bias=0 bn=0 act=none",
    ]
    growth = 12
    channels = 24
    for block, hw in enumerate((32, 16, 8)):
        for _ in range(12):
            lines.append(f"batchnorm c={channels}")
            lines.append(
                f"conv in={channels} out={growth} k=3 stride=1 pad=1 hin={hw} win={hw} bias=0 bn=0 act=relu"
            )
            channels += growth
        if block < 2:
            lines.append(f"# transition {block + 1}")
            lines.append(f"batchnorm c={channels}")
            lines.append(
                f"conv in={channels} out={channels} k=1 stride=1 pad=0 hin={hw} win={hw} bias=0 bn=0 act=relu"
            )
            lines.append("avgpool k=2 stride=2")
    lines += [
        f"batchnorm c={channels}",
        "avgpool k=8 stride=8",
        "flatten",
        f"linear in={channels} out=10 bias=1 act=none",
    ]
    return "\n".join(lines) + "\n"


def toycnn16() -> str:
    return "\n".join(
        [
            "# 3-conv toy CNN for 16x16 single-channel inputs, 2 classes.",
            "input 1 16 16",
            "conv out=8 k=3 stride=1 pad=1 bias=1 bn=0 act=relu",
            "maxpool k=2 stride=2",
            "conv out=16 k=3 stride=1 pad=1 bias=1 bn=0 act=relu",
            "maxpool k=2 stride=2",
            "conv out=16 k=3 stride=1 pad=1 bias=1 bn=0 act=relu",
            "flatten",
            "linear out=2 bias=1 act=none",
        ]
    ) + "\n"


def main():
    os.makedirs(NETS, exist_ok=True)
    for name, text in [
        ("vgg16_cifar.net", vgg16()),
        ("resnet56_cifar.net", resnet56()),
        ("densenet40_cifar.net", densenet40()),
        ("toycnn16.net", toycnn16()),
    ]:
        path = os.path.join(NETS, name)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
