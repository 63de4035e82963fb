"""Generate the synthetic benchmark corpus in the binary record format.

Writes data_batch_1.bin (5,000 training images) and test_batch.bin (1,000
test images) of oriented-grating images, the stand-in used when the real
10-class corpus is not on disk.  The files are a pure function of the seed,
so every invocation reproduces them byte for byte.

Usage: python3 demos/00_make_benchmark_data.py [out_dir]
"""

import sys
from pathlib import Path

from crescendo.data import load_cifar_dir, write_benchmark_files

out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path("data")
write_benchmark_files(out_dir)

train = load_cifar_dir(out_dir, "train", 10)
test = load_cifar_dir(out_dir, "test", 10)
print(f"wrote {out_dir}/data_batch_1.bin ({len(train)} records)")
print(f"wrote {out_dir}/test_batch.bin ({len(test)} records)")
print("train with: crescendo train --config configs/desk.cfg "
      f"--data-dir {out_dir} --out runs/desk")
