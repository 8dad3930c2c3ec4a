"""
Plugging in a real detector over the wire protocol
==================================================

Detectors are external processes speaking newline-delimited JSON over
stdio (``exec:`` URIs) or TCP (``tcp:`` URIs).  This script writes a
40-line detector in a scratch file — any language works, this one happens
to be Python — launches it through the exec transport, and runs the full
enhancement pipeline against it.
"""

import sys
import tempfile
import textwrap
from pathlib import Path

from srdet import (
    PipelineConfig,
    SceneParams,
    WireDetectorBackend,
    enhance_frame,
    generate_scene,
)

# A minimal conforming backend: read one JSON line, answer it, repeat.
# It "detects" bright rows — a stand-in for a real model; the point is
# the protocol, not the detector.  Request images arrive as base64 PNG;
# responses echo the request_id and list boxes with class and score.
DETECTOR_SOURCE = textwrap.dedent(
    '''
    import base64, io, json, struct, sys, zlib

    def decode_png_gray(data):
        # width, height, then mean over RGB of each row
        w, h = struct.unpack(">II", data[16:24])
        idat = b""
        pos = 8
        while pos < len(data):
            (length,), tag = struct.unpack(">I", data[pos:pos + 4]), data[pos + 4:pos + 8]
            if tag == b"IDAT":
                idat += data[pos + 8:pos + 8 + length]
            pos += length + 12
        raw = zlib.decompress(idat)
        stride = 1 + 3 * w
        rows = []
        prev = bytearray(3 * w)
        for y in range(h):
            line = bytearray(raw[y * stride + 1:(y + 1) * stride])
            if raw[y * stride] == 2:  # "up" filter
                for i in range(len(line)):
                    line[i] = (line[i] + prev[i]) & 0xFF
            rows.append(sum(line) / len(line))
            prev = line
        return w, h, rows

    for line in sys.stdin:
        req = json.loads(line)
        if req.get("type") != "detect":
            reply = {"v": 1, "type": "error", "request_id": req.get("request_id", 0),
                     "error": "only detect is supported"}
        else:
            w, h, rows = decode_png_gray(base64.b64decode(req["image"]))
            bright = [y for y, v in enumerate(rows) if v > 40]
            dets = []
            if bright:
                dets.append({"box": [0, bright[0], w, bright[-1] + 1],
                             "class_id": 3, "score": 0.8})
            reply = {"v": 1, "type": "detections", "request_id": req["request_id"],
                     "detections": dets}
        sys.stdout.write(json.dumps(reply, separators=(",", ":")) + "\\n")
        sys.stdout.flush()
    '''
)

script = Path(tempfile.mkdtemp(prefix="srd_wire_")) / "rowfinder.py"
script.write_text(DETECTOR_SOURCE)

scene, image = generate_scene(seed=3, params=SceneParams(n_objects=(4, 4)))

# exec: spawns the child and talks to it over stdin/stdout.  The same
# code path serves tcp:host:port for long-running detector servers.
backend = WireDetectorBackend(f"exec:{sys.executable} {script}")
try:
    result = enhance_frame(image, PipelineConfig(), backend)
finally:
    backend.close()

print(f"base detections from the external process: {len(result.base.items)}")
for det in result.base.items:
    print(f"  class {det.class_id} score {det.score:.2f} "
          f"box ({det.x1:.0f},{det.y1:.0f},{det.x2:.0f},{det.y2:.0f})")
print(f"after window re-detection and merge: {len(result.merged.items)}")
