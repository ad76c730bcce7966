"""
Setup verification for hitrev.
Run this once after installing the requirements.
"""

import math
import sys

REQUIRED_PACKAGES = ["numpy", "scipy", "pandas", "pydantic", "dotenv"]


def main() -> int:
    print("=" * 60)
    print("hitrev - Setup Verification")
    print("=" * 60)

    issues = []
    successes = []

    # 1. Check Python version
    print("\n1. Checking Python version...")
    if sys.version_info >= (3, 9):
        successes.append(f"✅ Python {sys.version_info.major}.{sys.version_info.minor}.{sys.version_info.micro}")
    else:
        issues.append(f"❌ Python {sys.version_info.major}.{sys.version_info.minor} (3.9+ required)")

    # 2. Check required packages
    print("\n2. Checking required packages...")
    for package in REQUIRED_PACKAGES:
        try:
            __import__(package)
            successes.append(f"✅ {package}")
        except ImportError:
            issues.append(f"❌ {package} not installed")

    # 3. Check settings
    print("\n3. Checking settings...")
    try:
        from hitrev.config import load_settings

        settings = load_settings()
        successes.append(f"✅ Settings loaded (seed={settings.seed}, cap={settings.cap}, model={settings.model})")
    except Exception as e:
        issues.append(f"❌ Settings invalid: {e}")

    # 4. Check the oracle on a chain with a known answer
    print("\n4. Checking the oracle...")
    try:
        from hitrev.model import cyclic_chain
        from hitrev.oracle import mep_exact

        mep = mep_exact(cyclic_chain(0.5, 0.25))
        if abs(mep - 0.25 * math.log(2.0)) < 1e-12:
            successes.append(f"✅ Cyclic chain entropy production {mep:.6f}")
        else:
            issues.append(f"❌ Cyclic chain entropy production {mep!r}, expected {0.25 * math.log(2.0)!r}")
    except Exception as e:
        issues.append(f"❌ Oracle error: {e}")

    # 5. Check one streamed estimate
    print("\n5. Checking a streamed estimate...")
    try:
        from hitrev.estimators import estimate_W_stream
        from hitrev.model import cyclic_chain

        report, _ = estimate_W_stream(cyclic_chain(), 1, 2, 8, 10**6)
        successes.append(f"✅ Waiting-time estimate at n=8: {report.raw}")
    except Exception as e:
        issues.append(f"❌ Estimator error: {e}")

    print("\n" + "=" * 60)
    print("SUMMARY")
    print("=" * 60)

    print(f"\n✅ Successes: {len(successes)}")
    for success in successes:
        print(f"  {success}")

    if issues:
        print(f"\n⚠️  Issues: {len(issues)}")
        for issue in issues:
            print(f"  {issue}")
        print("\nFix the issues above, then run:")
        print("  python app.py oracle --model builtin:cyclic")
        return 1

    print("\n🎉 All checks passed!")
    print("\nTry:")
    print("  python app.py oracle --model builtin:cyclic")
    print("  python -m pytest")
    return 0


if __name__ == "__main__":
    sys.exit(main())
