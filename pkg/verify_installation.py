"""
Installation Verification Script
Checks all dependencies are installed and the Ed25519/BLAKE2b primitives
reproduce the golden vectors
"""

import importlib.metadata
import json
import sys
from pathlib import Path

GOLDEN_VECTORS = Path(__file__).parent / "fixtures" / "golden_vectors.json"

# (package_name, import_name, description, critical)
MODULES = [
    ("cryptography", "cryptography", "Ed25519 signatures", True),
    ("pandas", "pandas", "Benchmark tables", True),
    ("numpy", "numpy", "Latency sampling", True),
    ("flask", "flask", "Gateway HTTP API", True),
    ("crc32c", "crc32c", "Gateway log checksums", True),
    ("psutil", "psutil", "Gateway store lock", True),
    ("requests", "requests", "HTTP ledger client", True),
    ("urllib3", "urllib3", "HTTP retries", True),
    ("python-dateutil", "dateutil", "Timestamp validation", True),
    ("python-dotenv", "dotenv", "Environment configuration", True),
    ("streamlit", "streamlit", "Developer dashboard", False),
    ("matplotlib", "matplotlib", "CDF plots", False),
    ("pytest", "pytest", "Test runner", False),
    ("hypothesis", "hypothesis", "Property tests", False),
]


def check_module(module_name, import_name=None):
    """Check if a module is installed and can be imported"""
    if import_name is None:
        import_name = module_name

    try:
        __import__(import_name)
        try:
            return True, importlib.metadata.version(module_name)
        except importlib.metadata.PackageNotFoundError:
            return True, "Unknown"
    except ImportError:
        return False, None


def check_golden_vectors(path: Path = GOLDEN_VECTORS) -> bool:
    """Derive the all-zero/all-one index and compare it with the fixture"""
    from ott_crypto import hash_digest
    from ott_index import derive_index_material

    vectors = json.loads(path.read_text())
    material = derive_index_material(bytes(32), bytes([1]) * 32)
    return (
        hash_digest(b"").hex() == vectors["blake2b_256"]["empty"]
        and material.index.hex() == vectors["materials"]["zero_one"]["index"]
    )


def main():
    print("=" * 60)
    print("OTT DID METHOD - DEPENDENCY CHECK")
    print("=" * 60)
    print()

    critical_missing = []
    optional_missing = []
    installed = []

    print("Checking dependencies...\n")

    for package_name, import_name, description, critical in MODULES:
        is_installed, version = check_module(package_name, import_name)

        if is_installed:
            print(f"✓ {package_name:<20} {version:<12} - {description}")
            installed.append(package_name)
        else:
            print(f"✗ {package_name:<20} {'Missing':<12} - {description}")
            if critical:
                critical_missing.append(package_name)
            else:
                optional_missing.append(package_name)

    print("\n" + "=" * 60)
    print("SUMMARY")
    print("=" * 60)

    print(f"\n✓ Installed packages: {len(installed)}")

    if critical_missing:
        print(f"\n❌ CRITICAL missing packages: {len(critical_missing)}")
        print("   " + ", ".join(critical_missing))
        print("\n   Run: pip install -r requirements.txt")

    if optional_missing:
        print(f"\n⚠️  Optional missing packages: {len(optional_missing)}")
        print("   " + ", ".join(optional_missing))

    python_version = sys.version_info
    print(f"\nPython version: {python_version.major}.{python_version.minor}.{python_version.micro}")
    if python_version < (3, 9):
        print("⚠️  WARNING: Python 3.9 or higher is required")
    else:
        print("✓ Python version is compatible")

    vectors_ok = False
    if not critical_missing:
        vectors_ok = check_golden_vectors()
        print("✓ Golden vectors reproduced" if vectors_ok else "❌ Golden vector mismatch")

    print("\n" + "=" * 60)
    if not critical_missing and vectors_ok:
        print("✅ ALL CRITICAL DEPENDENCIES ARE INSTALLED")
        return 0
    print("❌ INSTALLATION INCOMPLETE")
    return 1


if __name__ == "__main__":
    sys.exit(main())
