# FIE Benchmark - Tests Module
