//! Prints a Zipf fixture corpus as TSV: `fixture [sentences] [vocab] [exponent]`.
fn main() {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(1000);
    let vocab: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(400);
    let exponent: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1.2);
    print!(
        "{}",
        vnjp_testkit::gen::to_tsv(&vnjp_testkit::gen::zipf_corpus(11, n, vocab, exponent))
    );
}
