//! Built-in experiment files.

pub const FIG4: &str = include_str!("../presets/fig4.toml");
pub const APPENDIX_A: &str = include_str!("../presets/appendix_a.toml");
pub const MIXTURE_SWEEP: &str = include_str!("../presets/mixture_sweep.toml");

/// `(name, source)` for every preset.
pub const ALL: [(&str, &str); 3] = [
    ("fig4", FIG4),
    ("appendix_a", APPENDIX_A),
    ("mixture_sweep", MIXTURE_SWEEP),
];

pub fn get(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn names() -> Vec<&'static str> {
    ALL.iter().map(|(n, _)| *n).collect()
}
