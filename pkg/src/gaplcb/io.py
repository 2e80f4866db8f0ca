"""JSON file formats for MDPs, policies, datasets and reports."""
from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Union

import numpy as np

from .dataset import TransitionDataset
from .mdp import Policy, RewardNoise, TabularMdp


def mdp_to_json(mdp: TabularMdp) -> dict:
    H, S, A = mdp.dims
    out = {
        "H": H,
        "S": S,
        "A": A,
        "p0": mdp.p0.tolist(),
        "kernel": mdp.kernel.tolist(),
        "rewards": mdp.rewards.tolist(),
    }
    if mdp.reward_noise is not None:
        out["reward_noise"] = {"kind": mdp.reward_noise.kind, "mask": mdp.reward_noise.mask.astype(int).tolist()}
    return out


def mdp_from_json(obj: dict) -> TabularMdp:
    H, S, A = int(obj["H"]), int(obj["S"]), int(obj["A"])
    kernel = np.asarray(obj["kernel"], dtype=np.float64)
    rewards = np.asarray(obj["rewards"], dtype=np.float64)
    p0 = np.asarray(obj["p0"], dtype=np.float64)
    if kernel.shape != (H, S, A, S) or rewards.shape != (H, S, A) or p0.shape != (S,):
        raise ValueError("array shapes do not match H, S, A")
    noise = None
    if "reward_noise" in obj:
        rn = obj["reward_noise"]
        noise = RewardNoise(rn["kind"], np.asarray(rn["mask"], dtype=bool))
    return TabularMdp(kernel, rewards, p0, noise)


def policy_to_json(pi: Policy) -> dict:
    if pi.kind == "deterministic":
        return {"kind": "deterministic", "actions": pi.table.tolist()}
    return {"kind": "stochastic", "probs": pi.table.tolist()}


def policy_from_json(obj: dict) -> Policy:
    if obj["kind"] == "deterministic":
        return Policy.deterministic(obj["actions"])
    if obj["kind"] == "stochastic":
        return Policy.stochastic(obj["probs"])
    raise ValueError(f"unknown policy kind {obj['kind']!r}")


def write_json(obj: dict, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(obj))


def read_json(path: Union[str, Path]) -> dict:
    return json.loads(Path(path).read_text())


def write_dataset(data: TransitionDataset, fh: IO[str], instance_hash: str = "") -> None:
    """Header line, then one {"i","h","s","a","r","sp"} record per transition."""
    header = {"seed": data.seed, "N": data.n, "H": data.H, "S": data.num_states,
              "A": data.num_actions, "instance_hash": instance_hash}
    fh.write(json.dumps(header) + "\n")
    for i, h, s, a, r, sp in data.records():
        fh.write(json.dumps({"i": i, "h": h, "s": s, "a": a, "r": r, "sp": sp}) + "\n")


def read_dataset(fh: IO[str]) -> tuple[TransitionDataset, dict]:
    header = json.loads(fh.readline())
    N, H = int(header["N"]), int(header["H"])
    states = np.zeros((N, H + 1), dtype=np.int64)
    actions = np.zeros((N, H), dtype=np.int64)
    rewards = np.zeros((N, H))
    seen = np.zeros((N, H), dtype=bool)
    for line in fh:
        if not line.strip():
            continue
        rec = json.loads(line)
        i, h = rec["i"], rec["h"]
        states[i, h] = rec["s"]
        actions[i, h] = rec["a"]
        rewards[i, h] = rec["r"]
        states[i, h + 1] = rec["sp"]
        seen[i, h] = True
    if not seen.all():
        i, h = map(int, np.argwhere(~seen)[0])
        raise ValueError(f"dataset is missing trajectory {i}, step {h}")
    data = TransitionDataset(states, actions, rewards, int(header["S"]), int(header["A"]),
                             int(header["seed"]), header.get("instance_hash", ""))
    return data, header
