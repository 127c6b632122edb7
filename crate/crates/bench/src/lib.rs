//! Shared fixtures for the benchmarks.

use ccmcf::channel::{build_link, LinkConfig, LinkRealization};
use ccmcf::tx::{core_mux_emulate, draw_frame, mb_shape, rrc_modulate, ShapedConstellation, SymbolFrame, CHANNEL_SPACING_HZ};
use ccmcf::{MultiChannelWaveform, Seed};

pub struct Fixture {
    pub constellation: ShapedConstellation,
    pub frame: SymbolFrame,
    pub wave: MultiChannelWaveform,
    pub link: LinkRealization,
}

/// `modes` channels carrying `symbols` symbols at 2 samples per symbol over
/// a `spans`-span link.
pub fn fixture(modes: usize, symbols: usize, spans: usize) -> Fixture {
    let seed = Seed::new(42);
    let constellation = mb_shape(4.688).expect("feasible entropy");
    let frame = draw_frame(&seed.named("frame"), &constellation, 2, symbols, 1.0 / 64.0).expect("frame");
    let wave = rrc_modulate(&frame, 2, 0.05, CHANNEL_SPACING_HZ).expect("modulate");
    let mux = core_mux_emulate(&wave, &frame, modes, symbols / modes, &seed.named("mux")).expect("mux");
    let link = build_link(
        &LinkConfig {
            modes,
            spans,
            ..LinkConfig::default()
        },
        &seed.named("link"),
    )
    .expect("link");
    Fixture {
        constellation,
        frame: mux.frame,
        wave: mux.wave,
        link,
    }
}
