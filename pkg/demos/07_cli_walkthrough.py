# The whole pipeline through the command-line surface, file to file:
# synth -> preprocess -> segment -> quantize -> segment --quantized.
# Everything lands in a temp directory; each command is equivalent to
# running `specdrive ...` in a shell.

import json
import tempfile
from pathlib import Path

from specdrive.cli import main
from specdrive.synth import SceneSpec, separating_mlp_weights, synth_scene
from specdrive.weights import save_weights

root = Path(tempfile.mkdtemp(prefix="specdrive-demo-"))
print(f"working in {root}\n")

(root / "scene.json").write_text(json.dumps(
    {"kind": "classes", "num_classes": 3, "layout_kind": "vstripes", "seed": 99}
))

run = lambda *argv: main(list(argv)) == 0 or (_ for _ in ()).throw(
    SystemExit(f"command failed: {argv}")
)

run("synth", "--spec", str(root / "scene.json"), "--out", str(root / "scene"))

run("preprocess",
    "--raw", str(root / "scene/raw.u16"),
    "--dark", str(root / "scene/dark.u16"),
    "--white", str(root / "scene/white.u16"),
    "--layout", str(root / "scene/layout.json"),
    "--out", str(root / "cube.hsc"),
    "--threads", "2")

# a classifier whose weights are constructed from the scene's signatures
scene = synth_scene(SceneSpec(kind="classes", num_classes=3, seed=99))
graph, weights = separating_mlp_weights(scene.signatures)
save_weights(root / "model.sdw", graph, weights)

run("model-info", str(root / "model.sdw"))
print()

run("segment",
    "--cube", str(root / "cube.hsc"),
    "--model", str(root / "model.sdw"),
    "--out", str(root / "mask.pgm"),
    "--render", str(root / "mask.ppm"),
    "--gt", str(root / "scene/labels.pgm"),
    "--metrics", str(root / "metrics.csv"))
print((root / "metrics.csv").read_text())

(root / "calib").mkdir()
run("preprocess",
    "--raw", str(root / "scene/raw.u16"), "--dark", str(root / "scene/dark.u16"),
    "--white", str(root / "scene/white.u16"),
    "--layout", str(root / "scene/layout.json"),
    "--out", str(root / "calib/sample.hsc"))
run("quantize",
    "--model", str(root / "model.sdw"),
    "--calib", str(root / "calib"),
    "--out", str(root / "model.sdq"),
    "--report", str(root / "quant.csv"))

run("segment",
    "--cube", str(root / "cube.hsc"),
    "--model", str(root / "model.sdq"), "--quantized",
    "--out", str(root / "mask_q.pgm"),
    "--gt", str(root / "scene/labels.pgm"),
    "--metrics", str(root / "metrics_q.csv"))
print((root / "metrics_q.csv").read_text())

print(f"artifacts in {root}")
