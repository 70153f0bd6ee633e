//! Write a synthetic corpus: `synth_corpus DIR VIDEOS [perfect|noisy]`.
use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().expect("usage: synth_corpus DIR VIDEOS [perfect|noisy]"));
    let videos: usize = args.next().map_or(10, |v| v.parse().expect("video count"));
    let perfect = args.next().as_deref() != Some("noisy");
    let bundles = mec_core::synth::corpus(videos, 7, perfect);
    mec_core::synth::write_corpus(&dir, &bundles).expect("write corpus");
    println!("wrote {videos} bundles to {}", dir.display());
}
