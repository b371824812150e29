# Regenerates expected.json from programs.py with CPython.
import json
import subprocess

src = open("programs.py").read()
out = []
for chunk in src.split("### ")[1:]:
    name, body = chunk.split("\n", 1)
    r = subprocess.run(["python3", "-c", body], capture_output=True, text=True)
    assert r.returncode == 0, (name, r.stderr)
    out.append({"name": name.strip(), "stdout": r.stdout})
json.dump(out, open("expected.json", "w"), indent=1, ensure_ascii=False)
print(len(out), "programs")
