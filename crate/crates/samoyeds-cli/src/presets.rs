//! MoE model shape presets for benchmarks and memory reports.

/// Expert-layer dimensions of one model family.
#[derive(Debug, Clone, Copy)]
pub struct BenchPreset {
    pub name: &'static str,
    pub experts: usize,
    pub hidden: usize,
    pub intermediate: usize,
}

pub const PRESETS: [BenchPreset; 6] = [
    BenchPreset { name: "qwen2", experts: 60, hidden: 1408, intermediate: 2048 },
    BenchPreset { name: "deepseek", experts: 64, hidden: 1408, intermediate: 2048 },
    BenchPreset { name: "minicpm", experts: 8, hidden: 2304, intermediate: 5760 },
    BenchPreset { name: "openmoe-34b", experts: 32, hidden: 3072, intermediate: 12288 },
    BenchPreset { name: "mixtral-8x7b", experts: 8, hidden: 4096, intermediate: 14336 },
    BenchPreset { name: "mixtral-8x22b", experts: 8, hidden: 6144, intermediate: 16384 },
];

pub fn find(name: &str) -> Option<&'static BenchPreset> {
    PRESETS.iter().find(|p| p.name == name)
}

pub fn names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}
