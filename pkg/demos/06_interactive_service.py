"""Drive the HTTP editing service in-process: create a session, submit a
scribble, read metrics, undo, and verify replay determinism.

Run:  python demos/06_interactive_service.py

For the real browser UI, build the frontend and launch the server:

    cd frontend && npm install && npm run build && cd ..
    voxeledit corpus make --config config.json
    voxeledit serve --case-dir runs/default/corpus --frontend-dir frontend/dist
"""

import hashlib
import json
import tempfile

from fastapi.testclient import TestClient

from voxeledit import GridMeta, PhantomParams, make_case, save_case
from voxeledit.service import create_app, replay_session_log

tmp = tempfile.mkdtemp(prefix="voxeledit_service_demo_")
meta = GridMeta((48, 48, 48), spacing_mm=1.1024)
case = make_case(meta, PhantomParams(seed=11, base_radii=(13, 11, 9)),
                 error_level=3.6, init_seed=12, n_frames=12)
save_case(case, f"{tmp}/case_0000")

app = create_app(case_dir=tmp, session_dir=f"{tmp}/sessions", sigma_enc=7.5, sigma_edit=7.5)
client = TestClient(app)

sid = client.post("/api/sessions", json={"case": "case_0000", "engine": "geometric"}).json()["session_id"]
frames = client.get(f"/api/sessions/{sid}/frames").json()
print(f"session {sid[:8]}... with {len(frames)} frames")

contours = client.get(f"/api/sessions/{sid}/frames/0/contours").json()
stroke = [[r + 2, c] for r, c in contours["current"][:9]]
resp = client.post(f"/api/sessions/{sid}/edits", json={"frame_id": 0, "path": stroke}).json()
print(f"edit t={resp['t']}: overall p95 {resp['metrics']['overall_p95_mm']:.2f} mm, "
      f"{len(resp['changed_frames'])} frame(s) changed")

mask_after = client.get(f"/api/sessions/{sid}/mask.bin").content
client.post(f"/api/sessions/{sid}/undo")
client.post(f"/api/sessions/{sid}/edits", json={"frame_id": 0, "path": stroke})
again = client.get(f"/api/sessions/{sid}/mask.bin").content
print(f"undo + resubmit reproduces the mask: {mask_after == again}")

log = client.get(f"/api/sessions/{sid}/log").json()
with open(f"{tmp}/log.json", "w") as fh:
    json.dump(log, fh)
replayed = replay_session_log(f"{tmp}/log.json", case_dir=tmp)
print(f"replay reproduces the export: "
      f"{replayed['final_mask_sha256'] == hashlib.sha256(again).hexdigest()}")
