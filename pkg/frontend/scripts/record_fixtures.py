"""Record service-contract fixtures for the studio tests.

Drives the real generation service in-process (deterministic toy model) and
writes the request/response bodies the UI tests stub against. Rerun after any
service schema change:

    python3 scripts/record_fixtures.py
"""

import json
from pathlib import Path

import numpy as np
from fastapi.testclient import TestClient

from ftg import ToyDenoiser, linear_schedule
from ftg.pianoroll import PianoRoll, roll_to_json
from ftg.service import create_app

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

STEPS = 64
BEATS = STEPS // 4


def melody_roll(cells: list[list[int]]) -> dict:
    data = np.zeros((2, STEPS, 128), dtype=np.uint8)
    for step, pitch in cells:
        data[0, step, pitch] = 1
        data[1, step, pitch] = 1
    return roll_to_json(PianoRoll(data))


def request_body(*, chords, keys, rhythm, melody_cells, w, harmonic, steps, seed):
    return {
        "length": STEPS,
        "chords": chords,
        "chords_unit": "beat",
        "keys": keys,
        "rhythm": rhythm,
        "rhythm_spec": None,
        "melody": melody_roll(melody_cells) if melody_cells else None,
        "guidance": {"w": w, "harmonic": harmonic, "rhythm": True, "kappa": 1e-6},
        "plan": {"mode": "ddim", "steps": steps, "eta": 0.0, "timesteps": None},
        "seed": seed,
        "checkpoint": None,
    }


def session(request: dict, melody_cells: list[list[int]]) -> dict:
    return {"version": 1, "request": request,
            "melody_cells": sorted(melody_cells)}


def dump(name: str, obj: dict, compact: bool) -> None:
    path = FIXTURES / name
    if compact:
        path.write_text(json.dumps(obj, sort_keys=True, separators=(",", ":")))
    else:
        path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")
    print(f"wrote {path.name} ({path.stat().st_size} bytes)")


def main() -> None:
    FIXTURES.mkdir(parents=True, exist_ok=True)

    bare = TestClient(create_app())
    r = bare.post("/api/v1/generate", json={"length": 16})
    assert r.status_code == 503, r.text
    dump("no_checkpoint_503.json", r.json(), compact=False)

    app = create_app()
    app.state.service.set_model("studio-toy", ToyDenoiser(width=8, temb_dim=16, seed=0),
                                linear_schedule(T=100))
    client = TestClient(app)

    dump("theory_keys.json", client.get("/api/v1/theory/keys").json(), compact=False)
    dump("health_loaded.json", client.get("/api/v1/health").json(), compact=False)

    basic_cells = [[0, 72], [4, 76], [8, 79], [12, 76], [16, 72],
                   [24, 67], [32, 72], [40, 74], [48, 76], [56, 71]]
    basic = request_body(
        chords=["C"] * 4 + ["F"] * 4 + ["G"] * 4 + ["C"] * 4,
        keys="C", rhythm="x.o.", melody_cells=basic_cells,
        w=None, harmonic=True, steps=10, seed=11)
    r = client.post("/api/v1/generate", json=basic)
    assert r.status_code == 200, r.text
    body = r.json()
    assert body["audit"]["out_of_key_rate"] == 0.0
    dump("generate_request.json", basic, compact=True)
    dump("generate_response.json", body, compact=True)
    dump("session_basic.json", session(basic, basic_cells), compact=True)

    derive = request_body(
        chords=["Am"] * 4 + ["Dm"] * 4 + ["Em"] * 4 + ["Am"] * 4,
        keys=None, rhythm=None, melody_cells=[],
        w=2.5, harmonic=True, steps=8, seed=3)
    assert client.post("/api/v1/generate", json=derive).status_code == 200
    dump("session_derive.json", session(derive, []), compact=True)

    key_cells = [[0, 69], [8, 72], [16, 76]]
    key_only = request_body(
        chords=None, keys="Am", rhythm="xooo", melody_cells=key_cells,
        w=None, harmonic=True, steps=10, seed=0)
    assert client.post("/api/v1/generate", json=key_only).status_code == 200
    dump("session_key_only.json", session(key_only, key_cells), compact=True)

    infeasible = dict(basic)
    rules = [{"kind": "free", "n": 1}] * STEPS
    rules[3] = {"kind": "exactly", "n": 100}
    infeasible["rhythm_spec"] = rules
    r = client.post("/api/v1/generate", json=infeasible)
    assert r.status_code == 409, r.text
    dump("infeasible_409.json", r.json(), compact=False)


if __name__ == "__main__":
    main()
