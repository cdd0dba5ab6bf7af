#!/usr/bin/env python3
"""
Conelab Demo Script
Run every recipe end to end at desk size and report what was written
"""

import os
import sys
import tempfile

# Add the project root to Python path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from experiment_runner import ExperimentRunner

DEMO_RECIPES = [
    ("wrinkled-gap", {"n_max": 10}),
    ("wrinkled-profile", {"radii": [2.0, 4.0, 8.0, 16.0], "triangles": 5, "grid": 8}),
    ("sasaki-classify", {"c": [0.0, 0.5, 1.0], "length": 2.0}),
    ("sasaki-qi", {"pairs": 3}),
    ("cn-sweep", {"samples": 200}),
    ("circum-iterate", {"a": 0.5, "set": "tree"}),
    ("amalgam-build", {"radius": 2, "triples": 200, "pairs": 20}),
    ("four-point", {"tuples": 50}),
]


def run_demo():
    """Run all recipes into a temporary directory"""
    print("📐 Conelab - Demo Mode")
    print("=" * 50)

    out_dir = tempfile.mkdtemp(prefix="conelab_demo_")
    try:
        runner = ExperimentRunner(out_dir)
        print("✅ Runner initialized successfully")
    except Exception as e:
        print(f"❌ Failed to initialize runner: {e}")
        return False

    print("\n🔍 Validating setup...")
    validation = runner.validate_setup()
    if not validation["valid"]:
        print("⚠️ Setup issues found:")
        for issue in validation["issues"]:
            print(f"  • {issue}")
        print("\n💡 To fix:")
        print("  1. Copy env_template.txt to .env")
        print("  2. Check the CONELAB_ values in it")
        return False
    print("✅ System validation passed")

    failures = []
    for recipe, params in DEMO_RECIPES:
        print(f"\n🚀 {recipe} {params}")
        result = runner.run(recipe, params)
        if result["success"]:
            print(f"📁 {', '.join(os.path.basename(f) for f in result['files'])}")
        else:
            print(f"❌ FAILED: {result['error']}")
            failures.append(recipe)

    if failures:
        print(f"\n❌ {len(failures)} recipe(s) failed: {', '.join(failures)}")
        return False

    print(f"\n🎉 Demo completed successfully! Results in {out_dir}")
    return True


if __name__ == "__main__":
    success = run_demo()
    sys.exit(0 if success else 1)
