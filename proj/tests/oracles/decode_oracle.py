# Copyright 2026 The biotune Authors.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

# Independent arbitrary-precision evaluation of the mask / weight / rate
# formulas. The constants frozen into tests/genotype_test.cpp come from here.
from mpmath import mp, mpf, power

mp.dps = 40


def weight(gene):
    return power(10, 2 * (mpf(gene) - mpf("0.5")))


def decode(genes, base_rates):
    threshold = mpf(genes[-1])
    out = []
    for gene, base in zip(genes[:-1], base_rates):
        mask = 1 if mpf(gene) > threshold else 0
        w = weight(gene)
        out.append((mask, w, mask * w * mpf(base)))
    return out


if __name__ == "__main__":
    for g in ("0", "0.5", "0.75", "1"):
        print(f"W({g}) = {mp.nstr(weight(g), 25)}")
    for b, (m, w, r) in enumerate(decode(["0.8", "0.2", "0.5"], ["0.001", "0.001"])):
        print(f"block {b}: mask={m} weight={mp.nstr(w, 25)} rate={mp.nstr(r, 25)}")
    print("trainable fraction [0,1]/[300,700] =", mpf(700) / mpf(1000))
