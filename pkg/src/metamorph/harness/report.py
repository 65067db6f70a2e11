"""Machine-readable run reports and discrete-path persistence.

Reports are JSON with sorted keys and no timestamps; wall-clock timing is
written only on request (to a sidecar), so identical runs produce
byte-identical report files. Paths are stored as one MVF file per image
and deformation plus a JSON manifest.
"""

from __future__ import annotations

import json
import os

from ..field import Deformation, ManifoldImage
from ..pathsolver import DiscretePath
from . import mvf


def dump_report(obj: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(obj, sort_keys=True, indent=2))
        fh.write("\n")


def dump_timing(seconds_by_stage: dict, path) -> None:
    dump_report({"timing_seconds": seconds_by_stage}, path)


def save_path(path_obj: DiscretePath, directory, extra: dict | None = None) -> None:
    os.makedirs(directory, exist_ok=True)
    for k, img in enumerate(path_obj.images):
        mvf.write_image(img, os.path.join(directory, f"image_{k:03d}.mvf"))
    for k, defm in enumerate(path_obj.deformations, start=1):
        mvf.write_deformation(defm, os.path.join(directory, f"deformation_{k:03d}.mvf"))
    manifest = {
        "K": path_obj.K,
        "step_energies": list(path_obj.step_energies),
        "total_energy": path_obj.total_energy,
    }
    if extra:
        manifest.update(extra)
    dump_report(manifest, os.path.join(directory, "path.json"))


def load_path(directory) -> tuple:
    manifest = json.loads(open(os.path.join(directory, "path.json"), encoding="utf-8").read())
    K = int(manifest["K"])
    images = tuple(
        mvf.read_image(os.path.join(directory, f"image_{k:03d}.mvf")) for k in range(K + 1)
    )
    deformations = tuple(
        mvf.read_deformation(os.path.join(directory, f"deformation_{k:03d}.mvf"))
        for k in range(1, K + 1)
    )
    path = DiscretePath(images, deformations, tuple(manifest["step_energies"]))
    return path, manifest
