// Loads a TSV corpus, picks the known intents, and shows how open intents
// are folded into class K+1 of the test split.

use std::io::Write;

use open_intent::data::{build_vocab, load_corpus, make_split, DatasetBundle, Format};

const CORPUS: &str = "\
add this song to blues roots\tAddToPlaylist
put the track on my workout list\tAddToPlaylist
add another tune to the road trip mix\tAddToPlaylist
what will the weather be tomorrow\tGetWeather
is it going to rain in paris\tGetWeather
forecast for the weekend please\tGetWeather
book a table for two tonight\tBookRestaurant
reserve a spot at the sushi place\tBookRestaurant
i need a table near the station\tBookRestaurant
play some jazz\tPlayMusic
put on the latest album by my favourite band\tPlayMusic
start my morning playlist\tPlayMusic
";

pub fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("snips_like.tsv");
    std::fs::File::create(&path)?.write_all(CORPUS.as_bytes())?;

    let corpus = load_corpus(&path, Format::Tsv)?;
    println!("intents: {:?}", corpus.intent_names);

    let bundle = make_split(&corpus, 0.5, 42)?;
    let spec = &bundle.spec;
    println!("known ({}): {:?}", spec.num_known, spec.known_names());
    for (name, id) in &spec.label_map {
        println!("  {name:<15} -> {id}");
    }
    println!(
        "train {} / validation {} / test {} utterances",
        bundle.train.len(),
        bundle.validation.len(),
        bundle.test.len()
    );
    for u in &bundle.test.utterances {
        println!("  test: {:<8} {}", bundle.test.intent_name(u.label), u.tokens.join(" "));
    }

    let vocab = build_vocab(&bundle.train, 1)?;
    println!("vocabulary: {} ids including PAD/UNK/CLS", vocab.len());

    bundle.save(dir.path(), Format::Jsonl)?;
    let again = DatasetBundle::load(dir.path(), Format::Jsonl)?;
    assert_eq!(again.spec, bundle.spec);
    println!("saved split reloads with the same label map");
    Ok(())
}

#[allow(dead_code)]
fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
