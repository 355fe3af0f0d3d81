#!/usr/bin/env python3
"""Convert preprocessed THINGS-EEG arrays into a neurostage subject directory.

Input per split: a .npy file holding either a dict with keys
'preprocessed_eeg_data' (images, repetitions, channels, time) and 'ch_names',
or a bare 4-d array (then pass --channels). A TSV per split lists one image
per line, in array order:  stimulus_id <TAB> class_id

Writes <out>/<subject>/{train_eeg.bin, test_eeg.bin, ids.json}. Rows are
image-major, repetition-minor; each row is a channel-major (C, T) block.
"""
import argparse
import json
import os
import struct
import sys
import zlib

import numpy as np


def write_container(path, level, arr):
    arr = np.ascontiguousarray(arr, dtype="<f4").reshape(arr.shape[0], -1)
    payload = arr.tobytes()
    header = b"NSFC" + struct.pack("<IBBQQ", 1, level, 0, arr.shape[0], arr.shape[1])
    tmp = path + ".tmp"
    with open(tmp, "wb") as f:
        f.write(header + payload + struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    os.replace(tmp, path)


def load_split(npy, channels):
    obj = np.load(npy, allow_pickle=True)
    if obj.dtype == object:
        obj = obj.item()
        return np.asarray(obj["preprocessed_eeg_data"]), list(obj["ch_names"])
    if not channels:
        sys.exit(f"{npy}: bare array needs --channels")
    return obj, channels


def read_ids(tsv):
    with open(tsv, encoding="utf-8") as f:
        return [line.rstrip("\n").split("\t")[:2] for line in f if line.strip()]


def rows(data, ids, what):
    if data.ndim != 4:
        sys.exit(f"{what}: expected (images, repetitions, channels, time), got {data.shape}")
    if len(ids) != data.shape[0]:
        sys.exit(f"{what}: {len(ids)} ids for {data.shape[0]} images")
    table = [{"stimulus": s, "class": c, "repetition": r}
             for s, c in ids for r in range(data.shape[1])]
    return data.reshape(-1, data.shape[2], data.shape[3]), table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--train", required=True)
    ap.add_argument("--test", required=True)
    ap.add_argument("--train-ids", required=True)
    ap.add_argument("--test-ids", required=True)
    ap.add_argument("--subject", required=True, help="e.g. Sub01")
    ap.add_argument("--out", required=True)
    ap.add_argument("--channels", default="", help="comma-separated, for bare arrays")
    ap.add_argument("--epoch-ms", default="0,1000")
    args = ap.parse_args()

    channels = [c for c in args.channels.split(",") if c]
    train, ch_train = load_split(args.train, channels)
    test, ch_test = load_split(args.test, channels)
    if ch_train != ch_test:
        sys.exit("train and test montages differ")
    train, train_rows = rows(train, read_ids(args.train_ids), "train")
    test, test_rows = rows(test, read_ids(args.test_ids), "test")
    if train.shape[1:] != test.shape[1:]:
        sys.exit(f"train {train.shape[1:]} and test {test.shape[1:]} trial shapes differ")

    d = os.path.join(args.out, args.subject)
    os.makedirs(d, exist_ok=True)
    write_container(os.path.join(d, "train_eeg.bin"), 4, train)
    write_container(os.path.join(d, "test_eeg.bin"), 4, test)
    start, end = (float(x) for x in args.epoch_ms.split(","))
    with open(os.path.join(d, "ids.json"), "w", encoding="utf-8") as f:
        json.dump({"channel_names": ch_train, "n_timesteps": int(train.shape[2]),
                   "epoch_ms": [start, end], "train": train_rows, "test": test_rows}, f)
    print(f"{d}: {len(train_rows)} train / {len(test_rows)} test trials, "
          f"{train.shape[1]} channels x {train.shape[2]} samples")


if __name__ == "__main__":
    main()
