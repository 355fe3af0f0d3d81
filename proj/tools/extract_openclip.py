#!/usr/bin/env python3
"""Frozen OpenCLIP RN50 feature extractor writing a neurostage feature cache.

Label file: tab-separated, one stimulus per line:
    stimulus_id <TAB> class_id <TAB> image path (relative to --images) <TAB> class label

Outputs low/high/final/text containers (see include/neurostage/io/container.hpp).
`--check` exits 0 only if open_clip, torch and the pretrained weights load.
"""
import argparse
import json
import os
import struct
import sys
import zlib


def load_backbone():
    import open_clip  # noqa: F401
    import torch  # noqa: F401

    model, _, preprocess = open_clip.create_model_and_transforms("RN50", pretrained="openai")
    tokenizer = open_clip.get_tokenizer("RN50")
    model.eval()
    return model, preprocess, tokenizer


def write_container(path, level, rows):
    dim = len(rows[0]) if rows else 0
    payload = b"".join(struct.pack("<%df" % dim, *r) for r in rows)
    header = b"NSFC" + struct.pack("<IBBQQ", 1, level, 0, len(rows), dim)
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(header + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    os.replace(tmp, path)


def write_index(path, ids):
    with open(path, "w", encoding="utf-8") as f:
        json.dump({i: n for n, i in enumerate(ids)}, f)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--check", action="store_true")
    ap.add_argument("--images")
    ap.add_argument("--labels")
    ap.add_argument("--out")
    ap.add_argument("--prompt", default="{}")
    ap.add_argument("--pooling", default="global_average")
    args = ap.parse_args()

    try:
        model, preprocess, tokenizer = load_backbone()
    except Exception as exc:  # missing package or weights
        print(f"backbone unavailable: {exc}", file=sys.stderr)
        return 3
    if args.check:
        return 0
    if args.pooling != "global_average":
        print("only global_average pooling is supported", file=sys.stderr)
        return 2

    import torch
    from PIL import Image

    entries = []
    with open(args.labels, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                sid, cid, rel, label = line.rstrip("\n").split("\t")
                entries.append((sid, cid, rel, label))

    visual = model.visual
    feats = {"low": [], "high": [], "final": []}
    with torch.no_grad():
        for sid, _, rel, _ in entries:
            img = preprocess(Image.open(os.path.join(args.images, rel)).convert("RGB")).unsqueeze(0)
            x = visual.stem(img) if hasattr(visual, "stem") else img
            b1 = visual.layer1(x)
            b3 = visual.layer3(visual.layer2(b1))
            final = visual.attnpool(visual.layer4(b3))
            feats["low"].append(b1.mean(dim=(2, 3))[0].tolist())
            feats["high"].append(b3.mean(dim=(2, 3))[0].tolist())
            final = final / final.norm(dim=-1, keepdim=True)
            feats["final"].append(final[0].tolist())

        classes = {}
        for _, cid, _, label in entries:
            classes.setdefault(cid, label)
        class_ids = sorted(classes)
        text = []
        for cid in class_ids:
            tok = tokenizer([args.prompt.replace("{}", classes[cid])])
            t = model.encode_text(tok)
            text.append((t / t.norm(dim=-1, keepdim=True))[0].tolist())

    os.makedirs(args.out, exist_ok=True)
    ids = [e[0] for e in entries]
    for code, level in enumerate(["low", "high", "final"]):
        write_container(os.path.join(args.out, level + ".nsfc"), code, feats[level])
        write_index(os.path.join(args.out, level + ".index.json"), ids)
    write_container(os.path.join(args.out, "text.nsfc"), 3, text)
    write_index(os.path.join(args.out, "text.index.json"), class_ids)
    manifest = {
        "stimulus_class": {e[0]: e[1] for e in entries},
        "metadata": {
            "provider": "openclip-rn50",
            "pooling": args.pooling,
            "prompt_template": args.prompt,
        },
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=1)
    return 0


if __name__ == "__main__":
    sys.exit(main())
