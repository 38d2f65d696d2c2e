#!/usr/bin/env python3
"""Spin up a demo collection run: synthetic class/image manifest, generated
surveys, placeholder images, and the HTTP service.

Usage:
    python3 scripts/demo_survey_service.py [--port 8000] [--workdir demo_run]

Then point the browser frontend (frontend/) at the printed base URL.
"""

import argparse
import json
from pathlib import Path

from rtosr.service import SurveyStore, serve
from rtosr.survey import generate_survey_sets


def make_placeholder_images(pool: dict, out_dir: Path) -> None:
    # 1x1 PNGs are enough for a wiring demo; real runs use real stimuli.
    png = bytes.fromhex(
        "89504e470d0a1a0a0000000d4948445200000001000000010802000000907753de"
        "0000000c4944415408d763f8cfc000000301010018dd8db00000000049454e44ae426082"
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    for images in pool.values():
        for image_id in images:
            (out_dir / image_id).write_bytes(png)


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--port", type=int, default=8000)
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--workdir", default="demo_run")
    parser.add_argument("--classes", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    workdir = Path(args.workdir)
    classes = [f"class{i}" for i in range(args.classes)]
    pool = {c: [f"{c}_img{j:02d}.png" for j in range(12)] for c in classes}

    surveys = generate_survey_sets(classes, pool, rng_seed=args.seed)
    workdir.mkdir(parents=True, exist_ok=True)
    (workdir / "classes.json").write_text(json.dumps(pool, indent=2))
    make_placeholder_images(pool, workdir / "images")
    print(f"{len(surveys)} surveys; images under {workdir / 'images'}")
    print(f"serving on http://{args.host}:{args.port}")

    store = SurveyStore(surveys)
    serve(store, workdir / "images", host=args.host, port=args.port)


if __name__ == "__main__":
    main()
