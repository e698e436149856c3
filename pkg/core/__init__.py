# FIE Benchmark - Core Estimation Module
