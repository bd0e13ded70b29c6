"""Check every gradient of the joint loss against central differences.

The scene is a 4x4 image with sky, one wall and ground, parsed with d=2 and
superpixel scales 4 and 8.  Each parameter tensor is perturbed entry by entry,
so the run takes a few seconds; the table lists the worst relative error per
tensor.
"""
from hlstm.gradcheck import TOLERANCE, run_gradcheck

report = run_gradcheck(d=2, size=4, seed=0)

print(f"{'parameter':<14} max relative error")
for name, err in sorted(report.max_error.items()):
    print(f"{name:<14} {err:.2e}")

name, index, analytic, numeric = report.worst
print(f"\nworst entry: {name}[{index}] analytic {analytic:.9e} numeric {numeric:.9e}")
print(f"overall {report.overall:.2e} (tolerance {TOLERANCE:g}), {report.seconds:.1f}s")
print("PASS" if report.passed() else "FAIL")
