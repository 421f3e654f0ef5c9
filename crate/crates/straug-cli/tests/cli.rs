//! Command line behavior: flag parsing, config handling, exit codes, and the
//! smaller subcommands not covered by the end-to-end suite.

mod common;

use common::*;
use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};

use straug::features::{frame_count, read_features, read_index};

/// A corpus of utterances all sharing one verb, with grids, tags, manifest,
/// and optionally audio on disk.
fn shared_verb_fixture(dir: &Path, n: usize, with_audio: bool) -> PathBuf {
    let utts: Vec<Utt> = (1..=n)
        .map(|i| {
            Utt::uniform(
                &format!("d{i:02}"),
                &format!("a b ran s{i:02} t{i:02}"),
                "spk0",
            )
        })
        .collect();
    let manifest = write_manifest(dir, &utts);
    write_textgrids(dir, &utts);
    write_conllu(dir, &utts, &["ran"]);
    if with_audio {
        write_wavs(dir, &utts);
    }
    manifest
}

fn build_memory_at(dir: &Path) {
    run_ok(bin()
        .arg("build-memory")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--out").arg(dir.join("mem.jsonl")));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    shared_verb_fixture(dir, 3, false);

    let missing_out = exit_code(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv")));
    assert_eq!(missing_out, 2, "missing required --out");

    let unknown = exit_code(bin().arg("frobnicate"));
    assert_eq!(unknown, 2, "unknown subcommand");

    let missing_manifest = exit_code(bin()
        .arg("build-memory")
        .arg("--manifest").arg(dir.join("nope.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--out").arg(dir.join("mem.jsonl")));
    assert_eq!(missing_manifest, 2, "nonexistent manifest file");

    let no_conllu = exit_code(bin()
        .arg("build-memory")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--out").arg(dir.join("mem.jsonl")));
    assert_eq!(no_conllu, 2, "no --conllu and no config");
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    shared_verb_fixture(dir, 3, false);
    build_memory_at(dir);

    fs::write(dir.join("bad.tsv"), "id\twrong\theader\nu1\tx\ty\n").unwrap();
    let bad_header = exit_code(bin()
        .arg("build-memory")
        .arg("--manifest").arg(dir.join("bad.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--out").arg(dir.join("mem2.jsonl")));
    assert_eq!(bad_header, 1, "malformed manifest header");

    let bad_fraction = exit_code(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--memory").arg(dir.join("mem.jsonl"))
        .arg("--out").arg(dir.join("aug.jsonl"))
        .arg("--fraction").arg("1.5"));
    assert_eq!(bad_fraction, 1, "fraction outside [0, 1]");
}

#[test]
fn empty_alignment_dir_flows_through_as_empty_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let utts: Vec<Utt> = (1..=3)
        .map(|i| Utt::uniform(&format!("e{i}"), &format!("a b ran s{i}"), "spk0"))
        .collect();
    write_manifest(dir, &utts);
    fs::create_dir(dir.join("align")).unwrap();
    write_conllu(dir, &utts, &["ran"]);

    build_memory_at(dir);
    assert_eq!(fs::read_to_string(dir.join("mem.jsonl")).unwrap(), "");

    run_ok(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--memory").arg(dir.join("mem.jsonl"))
        .arg("--out").arg(dir.join("aug.jsonl"))
        .arg("--stats-out").arg(dir.join("stats.json")));
    assert_eq!(fs::read_to_string(dir.join("aug.jsonl")).unwrap(), "");
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["total"], 3);
    assert_eq!(stats["discarded_no_alignment"], 3);
    assert_eq!(stats["emitted"], 0);

    run_ok(bin()
        .arg("translate")
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out").arg(dir.join("aug_de.jsonl"))
        .arg("--backend").arg("identity"));
    assert_eq!(fs::read_to_string(dir.join("aug_de.jsonl")).unwrap(), "");

    let output = run_ok(bin()
        .arg("materialize")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--in").arg(dir.join("aug_de.jsonl"))
        .arg("--out-dir").arg(dir.join("out")));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("warning"), "stderr: {stderr}");
    assert!(!dir.join("out").join("manifest.tsv").exists());
}

#[test]
fn config_file_supplies_paths_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    shared_verb_fixture(dir, 12, false);
    build_memory_at(dir);

    let config = format!(
        "[paths]\nmanifest = {:?}\nalignments = {:?}\nconllu = {:?}\nmemory = {:?}\n\n[augment]\nseed = 5\n",
        dir.join("train.tsv"),
        dir.join("align"),
        dir.join("tags.conllu"),
        dir.join("mem.jsonl"),
    );
    fs::write(dir.join("straug.toml"), config).unwrap();

    run_ok(bin()
        .arg("--config").arg(dir.join("straug.toml"))
        .arg("augment")
        .arg("--out").arg(dir.join("from_config.jsonl")));
    run_ok(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--memory").arg(dir.join("mem.jsonl"))
        .arg("--seed").arg("5")
        .arg("--out").arg(dir.join("from_flags.jsonl")));
    assert_eq!(
        fs::read(dir.join("from_config.jsonl")).unwrap(),
        fs::read(dir.join("from_flags.jsonl")).unwrap()
    );

    run_ok(bin()
        .arg("--config").arg(dir.join("straug.toml"))
        .arg("augment")
        .arg("--seed").arg("9")
        .arg("--out").arg(dir.join("override.jsonl")));
    run_ok(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--memory").arg(dir.join("mem.jsonl"))
        .arg("--seed").arg("9")
        .arg("--out").arg(dir.join("flags9.jsonl")));
    assert_eq!(
        fs::read(dir.join("override.jsonl")).unwrap(),
        fs::read(dir.join("flags9.jsonl")).unwrap()
    );
    assert_ne!(
        fs::read(dir.join("override.jsonl")).unwrap(),
        fs::read(dir.join("from_config.jsonl")).unwrap(),
        "the --seed flag must override the config seed"
    );

    let missing = exit_code(bin()
        .arg("--config").arg(dir.join("nope.toml"))
        .arg("stats")
        .arg("--in").arg(dir.join("x.json")));
    assert_eq!(missing, 2, "missing config file");

    fs::write(dir.join("odd.toml"), "[paths]\nmanifesto = \"x\"\n").unwrap();
    let unknown_key = exit_code(bin()
        .arg("--config").arg(dir.join("odd.toml"))
        .arg("augment")
        .arg("--out").arg(dir.join("y.jsonl")));
    assert_eq!(unknown_key, 2, "unknown config key");
}

#[test]
fn translate_backend_selection_and_endpoint_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    shared_verb_fixture(dir, 4, false);
    build_memory_at(dir);
    run_ok(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--memory").arg(dir.join("mem.jsonl"))
        .arg("--out").arg(dir.join("aug.jsonl"))
        .arg("--stats-out").arg(dir.join("aug_stats.json")));

    let no_endpoint = exit_code(bin()
        .arg("translate")
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out").arg(dir.join("t1.jsonl"))
        .env_remove("STR_MT_ENDPOINT"));
    assert_eq!(no_endpoint, 2, "http backend without any endpoint");

    let no_table = exit_code(bin()
        .arg("translate")
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out").arg(dir.join("t2.jsonl"))
        .arg("--backend").arg("file"));
    assert_eq!(no_table, 2, "file backend without a table");

    let bogus = exit_code(bin()
        .arg("translate")
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out").arg(dir.join("t3.jsonl"))
        .arg("--backend").arg("carrier-pigeon"));
    assert_eq!(bogus, 2, "unknown backend name");

    run_ok(bin()
        .arg("translate")
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out").arg(dir.join("echo.jsonl"))
        .arg("--backend").arg("identity"));
    for line in read_jsonl(&dir.join("echo.jsonl")) {
        assert_eq!(line["tgt_text"], line["src_text"]);
    }

    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    serve_translations(listener, |_, texts| {
        Some(texts.iter().map(|t| format!("DE:{t}")).collect())
    });
    run_ok(bin()
        .arg("translate")
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out").arg(dir.join("http.jsonl"))
        .arg("--stats-in").arg(dir.join("aug_stats.json"))
        .arg("--stats-out").arg(dir.join("tr_stats.json"))
        .env("STR_MT_ENDPOINT", format!("http://{addr}/translate")));
    let lines = read_jsonl(&dir.join("http.jsonl"));
    assert_eq!(lines.len(), 4);
    for line in &lines {
        let src = line["src_text"].as_str().unwrap();
        assert_eq!(line["tgt_text"].as_str().unwrap(), format!("DE:{src}"));
    }
    let stats: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("tr_stats.json")).unwrap()).unwrap();
    assert_eq!(stats["total"], 4);
    assert_eq!(stats["emitted"], 4);
    assert_eq!(stats["skipped_translation"], 0);
}

#[test]
fn ctm_alignment_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let utts: Vec<Utt> = (1..=3)
        .map(|i| Utt::uniform(&format!("c{i}"), &format!("a b ran s{i}"), "spk0"))
        .collect();
    write_manifest(dir, &utts);
    write_conllu(dir, &utts, &["ran"]);

    let mut ctm = String::from(";; word alignments\n\n");
    for utt in &utts {
        for (word, (t0, t1)) in utt.words.iter().zip(&utt.spans) {
            ctm.push_str(&format!("{} 1 {t0} {} {word}\n", utt.id, t1 - t0));
        }
    }
    fs::write(dir.join("align.ctm"), ctm).unwrap();

    run_ok(bin()
        .arg("build-memory")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align.ctm"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--out").arg(dir.join("mem.jsonl")));
    let memory = read_jsonl(&dir.join("mem.jsonl"));
    assert_eq!(memory.len(), 1);
    assert_eq!(memory[0]["pivot"], "ran");
    assert_eq!(memory[0]["entries"].as_array().unwrap().len(), 3);
}

#[test]
fn wrong_tier_name_discards_with_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    shared_verb_fixture(dir, 3, false);

    let output = run_ok(bin()
        .arg("build-memory")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--tier").arg("phones")
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--out").arg(dir.join("mem.jsonl")));
    assert!(String::from_utf8_lossy(&output.stderr).contains("warning"));
    assert_eq!(fs::read_to_string(dir.join("mem.jsonl")).unwrap(), "");

    let validate = run_ok(bin()
        .arg("validate")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--tier").arg("phones"));
    let stdout = String::from_utf8_lossy(&validate.stdout);
    assert!(stdout.contains("kept            0"), "stdout: {stdout}");
    assert!(stdout.contains("no alignment    3"), "stdout: {stdout}");
}

#[test]
fn featurize_writes_readable_features_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let utts: Vec<Utt> = [("f1", "a b"), ("f2", "a b c")]
        .iter()
        .map(|(id, text)| Utt::uniform(id, text, "spk0"))
        .collect();
    write_manifest(dir, &utts);
    write_wavs(dir, &utts);

    run_ok(bin()
        .arg("featurize")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--out-dir").arg(dir.join("feats")));
    let index = read_index(&dir.join("feats").join("index.tsv")).unwrap();
    assert_eq!(index.len(), 2);
    for (entry, utt) in index.iter().zip(&utts) {
        assert_eq!(entry.utterance_id, utt.id);
        let features = read_features(&dir.join("feats").join(&entry.path)).unwrap();
        assert_eq!(features.dim, 80);
        assert_eq!(features.n_frames, entry.n_frames);
        assert_eq!(features.n_frames, frame_count(utt.samples.len(), 400, 160));
        for d in 0..features.dim {
            let mean: f64 = (0..features.n_frames).map(|t| features.row(t)[d]).sum::<f64>()
                / features.n_frames as f64;
            assert!(mean.abs() < 1e-6, "normalized mean {mean}");
        }
    }

    run_ok(bin()
        .arg("featurize")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--out-dir").arg(dir.join("raw"))
        .arg("--raw")
        .arg("--n-mels").arg("40"));
    let features = read_features(&dir.join("raw").join("f1.fbank")).unwrap();
    assert_eq!(features.dim, 40);
    let mean: f64 =
        (0..features.n_frames).map(|t| features.row(t)[0]).sum::<f64>() / features.n_frames as f64;
    assert!(mean.abs() > 1e-6, "raw features should not be normalized");
}

#[test]
fn stats_check_flags_identity_violations() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let broken = serde_json::json!({
        "total": 5,
        "discarded_no_alignment": 1,
        "discarded_count_mismatch": 0,
        "skipped_tag_mismatch": 0,
        "skipped_no_pivot": 0,
        "skipped_no_candidate": 0,
        "skipped_translation": 0,
        "skipped_fraction": 0,
        "emitted": 1
    });
    fs::write(dir.join("broken.json"), broken.to_string()).unwrap();

    let report = run_ok(bin()
        .arg("--verbose")
        .arg("stats")
        .arg("--in").arg(dir.join("broken.json")));
    assert!(String::from_utf8_lossy(&report.stdout).contains("identity               VIOLATED"));

    let checked = exit_code(bin()
        .arg("stats")
        .arg("--in").arg(dir.join("broken.json"))
        .arg("--check"));
    assert_eq!(checked, 1);
}

#[test]
fn validate_reports_alignment_and_tag_counts() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    let utts: Vec<Utt> = [
        ("v1", "a b ran home"),
        ("v2", "a b ran home"),
        ("v3", "a b ran home"),
        ("v4", "a b ran home"),
        ("v5", "a b ran home"),
        ("v6", "c d e f"),
    ]
    .iter()
    .map(|(id, text)| Utt::uniform(id, text, "spk0"))
    .collect();
    write_manifest(dir, &utts);
    write_textgrids(dir, &utts[1..]);
    let wrong: Vec<(String, f64, f64)> = ["a", "b", "ran", "home", "extra"]
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_string(), i as f64 * 0.5, (i + 1) as f64 * 0.5))
        .collect();
    fs::write(dir.join("align").join("v2.TextGrid"), long_textgrid(&wrong, 2.5)).unwrap();

    let mut conllu = String::new();
    for utt in &utts {
        if utt.id == "v5" {
            continue;
        }
        conllu.push_str(&format!("# sent_id = {}\n", utt.id));
        let rows = if utt.id == "v3" { 3 } else { utt.words.len() };
        for i in 0..rows {
            let upos = if utt.words[i] == "ran" { "VERB" } else { "NOUN" };
            conllu.push_str(&format!("{}\t{}\t_\t{}\t_\t_\t0\t_\t_\t_\n", i + 1, utt.words[i], upos));
        }
        conllu.push('\n');
    }
    fs::write(dir.join("tags.conllu"), conllu).unwrap();

    let output = run_ok(bin()
        .arg("validate")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu")));
    let stdout = String::from_utf8_lossy(&output.stdout);
    for line in [
        "utterances      6",
        "kept            4",
        "no alignment    1",
        "count mismatch  1",
        "with pivots     3",
        "without pivots  1",
        "tag mismatch    1",
        "untagged        1",
    ] {
        assert!(stdout.contains(line), "missing {line:?} in:\n{stdout}");
    }
}

#[test]
fn materialize_junction_silence_pads_between_segments() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    shared_verb_fixture(dir, 2, true);
    build_memory_at(dir);
    run_ok(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--memory").arg(dir.join("mem.jsonl"))
        .arg("--out").arg(dir.join("aug.jsonl")));

    run_ok(bin()
        .arg("materialize")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out-dir").arg(dir.join("tight")));
    run_ok(bin()
        .arg("materialize")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--in").arg(dir.join("aug.jsonl"))
        .arg("--out-dir").arg(dir.join("padded"))
        .arg("--junction-silence-ms").arg("10"));

    for line in read_jsonl(&dir.join("aug.jsonl")) {
        let name = format!("{}.wav", line["id"].as_str().unwrap());
        let tight = straug::audio::read_wav(&dir.join("tight").join(&name)).unwrap();
        let padded = straug::audio::read_wav(&dir.join("padded").join(&name)).unwrap();
        assert_eq!(padded.samples.len(), tight.samples.len() + 160);
    }
}

#[test]
fn per_utterance_emits_multiple_ordinals() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    shared_verb_fixture(dir, 12, false);
    build_memory_at(dir);

    run_ok(bin()
        .arg("augment")
        .arg("--manifest").arg(dir.join("train.tsv"))
        .arg("--alignments").arg(dir.join("align"))
        .arg("--conllu").arg(dir.join("tags.conllu"))
        .arg("--memory").arg(dir.join("mem.jsonl"))
        .arg("--out").arg(dir.join("aug.jsonl"))
        .arg("--per-utterance").arg("2"));

    let lines = read_jsonl(&dir.join("aug.jsonl"));
    assert_eq!(lines.len(), 24);
    for (i, line) in lines.iter().enumerate() {
        let source = format!("d{:02}", i / 2 + 1);
        let ordinal = i % 2 + 1;
        assert_eq!(line["id"].as_str().unwrap(), format!("{source}-str-{ordinal}"));
        assert_eq!(line["provenance"]["src_a"].as_str().unwrap(), source);
    }
}
