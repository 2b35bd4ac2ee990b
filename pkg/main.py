import subprocess
import sys

from src.config.config import OUTPUT_DIR

# Detuning swept from -10 Omega to +10 Omega
BOUNDARY = ["--delta-i", "-10", "--delta-f", "10"]
SOLVED = OUTPUT_DIR / "solve_v035.json"

STEPS = [
    # === CONSTANT CONTROL ===
    ("🎯 Roland-Cerf Resonances", ["resonances", *BOUNDARY, "--out", str(OUTPUT_DIR / "resonances.csv")]),

    # === WORKED EXAMPLE ===
    ("🧮 Solve v = 0.35", ["solve", *BOUNDARY, "--v", "0.35", "--out", str(SOLVED)]),
    ("🔍 Verify v = 0.35", ["verify", str(SOLVED), "--out", str(OUTPUT_DIR / "verify_v035.csv")]),
    ("🌀 Simulate v = 0.35", ["simulate", "--from-json", str(SOLVED), "--out", str(OUTPUT_DIR / "simulate_v035")]),
    ("📉 Resonance Dip Scan", ["scan", *BOUNDARY, "--v", "0.35", "--m", "2", "--integrate",
                               "--out", str(OUTPUT_DIR / "scan_v035.csv")]),

    # === STAIRCASE ===
    ("🪜 Staircase Sweep", ["staircase", *BOUNDARY, "--v-start", "0.15", "--v-stop", "1.0", "--v-count", "200",
                           "--out", str(OUTPUT_DIR / "staircase.csv")]),
]

def run_step(name, args):
    print(f"\n{name}\n{'=' * len(name)}")
    result = subprocess.run([sys.executable, "-m", "src.cli.cli", *args])
    if result.returncode != 0:
        print(f"❌ Failed at: {name} (exit {result.returncode})")
        sys.exit(result.returncode)
    print(f"✅ Completed: {name}")

def main():
    print("\n🚀 Running Full Reproduction Pipeline\n" + "=" * 37)
    try:
        for name, args in STEPS:
            run_step(name, args)
        print(f"\n🎉 Pipeline completed! Data waiting in {OUTPUT_DIR}/")
    except KeyboardInterrupt:
        print("\n\n🛑 Pipeline cancelled by user. The state stays on the north pole. 🧭")


if __name__ == "__main__":
    main()
