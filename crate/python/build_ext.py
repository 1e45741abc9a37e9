"""Build the extension module with cargo and place it next to this script.

Equivalent to what maturin would do for a local build, without needing it.
"""

import shutil
import subprocess
import sys
import sysconfig
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def main():
    subprocess.run(
        ["cargo", "build", "--release", "-p", "epr-softphoton-py", "--features", "extension-module"],
        cwd=ROOT,
        check=True,
    )
    lib = {"darwin": "libepr_softphoton_py.dylib", "win32": "epr_softphoton_py.dll"}.get(
        sys.platform, "libepr_softphoton_py.so"
    )
    suffix = sysconfig.get_config_var("EXT_SUFFIX") or ".so"
    target = Path(__file__).resolve().parent / f"epr_softphoton{suffix}"
    shutil.copyfile(ROOT / "target" / "release" / lib, target)
    print(target)


if __name__ == "__main__":
    main()
