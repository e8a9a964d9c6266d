"""Reader, writer and reference forward pass for HOPW policy weights files.

Trainer-side counterpart of the Rust policy runtime. Depends on numpy only.

    python3 hopw.py probe WEIGHTS INPUTS OUTPUTS

reads a JSON list of {"history": [[...], ...], "obs": [...]} probes and
writes the matching list of {"action", "v_hat", "c_hat", "mu"} outputs.
"""

import hashlib
import json
import struct
import sys

import numpy as np

MAGIC = b"HOPW"
VERSION = 1


def read(path):
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise ValueError("missing HOPW header")
    version, n = struct.unpack_from("<II", raw, 4)
    if version != VERSION:
        raise ValueError(f"unsupported version {version}")
    manifest = json.loads(raw[12 : 12 + n])
    data = raw[12 + n :]
    if hashlib.sha256(data).hexdigest() != manifest["data_sha256"].lower():
        raise ValueError("data checksum mismatch")
    tensors = {}
    for e in manifest["tensors"]:
        if e["dtype"] != "float32":
            raise ValueError(f"tensor {e['name']} has dtype {e['dtype']}")
        count = int(np.prod(e["shape"], dtype=np.int64))
        arr = np.frombuffer(data, dtype="<f4", count=count, offset=e["offset"])
        tensors[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    return manifest, tensors


def write(path, tensors, activations, history, obs_dim, actor_inputs):
    """`tensors` is an ordered mapping of name to array."""
    entries, chunks, offset = [], [], 0
    for name, arr in tensors.items():
        buf = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        entries.append({"name": name, "shape": list(np.shape(arr)), "dtype": "float32", "offset": offset})
        chunks.append(buf)
        offset += len(buf)
    data = b"".join(chunks)
    manifest = {
        "tensors": entries,
        "activations": activations,
        "layout": "row-major",
        "history": history,
        "obs_dim": obs_dim,
        "actor_inputs": actor_inputs,
        "data_sha256": hashlib.sha256(data).hexdigest(),
    }
    blob = json.dumps(manifest).encode()
    with open(path, "wb") as f:
        f.write(MAGIC + struct.pack("<II", VERSION, len(blob)) + blob + data)


ACTIVATIONS = {
    "elu": lambda x: np.where(x > 0, x, np.expm1(np.minimum(x, 0))),
    "relu": lambda x: np.maximum(x, 0),
    "tanh": np.tanh,
}


def _mlp(t, net, x, act, activate_last):
    n = 0
    while f"{net}.{n}.weight" in t:
        n += 1
    for i in range(n):
        x = t[f"{net}.{i}.weight"] @ x + t[f"{net}.{i}.bias"]
        if i + 1 < n or activate_last:
            x = act(x)
    return x


def _head(t, name, x):
    return t[f"head.{name}.weight"] @ x + t[f"head.{name}.bias"]


def forward(manifest, t, history, obs):
    """`history` lists past observations newest first; missing ones are zeros."""
    h, d = manifest["history"], manifest["obs_dim"]
    stacked = np.zeros(h * d)
    for k, o in enumerate(history[:h]):
        stacked[k * d : (k + 1) * d] = o
    acts = {k: ACTIVATIONS[v] for k, v in manifest["activations"].items()}
    feat = _mlp(t, "encoder", stacked, acts["encoder"], True)
    mu = _head(t, "mu", feat)
    v_hat = _head(t, "v_hat", feat)
    c = _head(t, "c_hat", feat)[0]
    blocks = {"obs": np.asarray(obs, dtype=np.float64), "mu": mu, "v_hat": v_hat}
    x = np.concatenate([blocks[b] for b in manifest["actor_inputs"]])
    action = _mlp(t, "actor", x, acts["actor"], False)
    return {
        "action": action.tolist(),
        "v_hat": v_hat.tolist(),
        "c_hat": float(1.0 / (1.0 + np.exp(-c))),
        "mu": mu.tolist(),
    }


def main(argv):
    if len(argv) != 5 or argv[1] != "probe":
        sys.exit(__doc__)
    manifest, tensors = read(argv[2])
    with open(argv[3]) as f:
        probes = json.load(f)
    out = [forward(manifest, tensors, p["history"], p["obs"]) for p in probes]
    with open(argv[4], "w") as f:
        json.dump(out, f)


if __name__ == "__main__":
    main(sys.argv)
