# Feature Selection and Benchmark Engines
