mod common;

use common::workflows::{check_mermaid, random_corpus, staged, reference_input, reference_rows};
use proptest::prelude::*;
use workflow_miner::stage::Stage;
use workflow_miner::workflow::{
    assemble, render_mermaid, render_table, render_table_row, write_flowcharts, ResearchWorkflow, TABLE_HEADER,
};

fn expected_edges(w: &ResearchWorkflow) -> usize {
    let sizes: Vec<usize> = w.stages.iter().map(Vec::len).filter(|&n| n > 0).collect();
    if sizes.is_empty() {
        0
    } else {
        sizes.iter().map(|n| n - 1).sum::<usize>() + sizes.len() - 1
    }
}

#[test]
fn reference_rows_are_reproduced() {
    for (seed, (id, cells)) in reference_rows().into_iter().enumerate() {
        let w = assemble(&id, &reference_input(seed as u64, &cells));
        for (stage, cell) in Stage::ALL.iter().zip(&cells) {
            let got: Vec<&str> = w.stage(*stage).iter().map(|s| s.phrase.as_str()).collect();
            assert_eq!(got.join(", "), *cell, "{id} {stage:?}");
        }
        assert_eq!(render_table_row(&w), format!("{id}\t{}", cells.join("\t")));
    }
}

#[test]
fn reference_flowchart_shape() {
    let (id, cells) = reference_rows().remove(0);
    assert_eq!(id, "2021.emnlp-main.443");
    let w = assemble(&id, &reference_input(7, &cells));
    let sizes: Vec<usize> = w.stages.iter().map(Vec::len).collect();
    assert_eq!(sizes, [1, 7, 5]);
    let doc = render_mermaid(&w);
    assert_eq!(check_mermaid(&doc).unwrap(), (13, 12));
    assert!(doc.contains("s1n1[\"multiple #91;cls#93; embeddings\"]"));
    assert!(doc.contains("s0n0 --> s1n0") && doc.contains("s1n6 --> s2n0"));
    assert_eq!(doc, render_mermaid(&assemble(&id, &reference_input(99, &cells))));
}

#[test]
fn exact_rendering() {
    let w = assemble(
        "p",
        &[
            staged("b", Stage::DataAnalysis, 4),
            staged("a \"q\"", Stage::DataPreparation, 1),
            staged("c", Stage::DataAnalysis, 2),
        ],
    );
    let expected = "flowchart TD
    subgraph data_preparation [\"data preparation\"]
        s0n0[\"a #quot;q#quot;\"]
    end
    subgraph data_analysis [\"data analysis\"]
        s2n0[\"c\"]
        s2n1[\"b\"]
    end
    s2n0 --> s2n1
    s0n0 --> s2n0
";
    assert_eq!(render_mermaid(&w), expected);
}

#[test]
fn placeholder_for_empty_workflow() {
    let doc = render_mermaid(&assemble("x", &[]));
    assert_eq!(check_mermaid(&doc).unwrap(), (1, 0));
}

#[test]
fn table_and_files() {
    let (ws, _) = random_corpus(3, 6);
    let table = render_table(&ws);
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some(TABLE_HEADER));
    assert_eq!(lines.count(), 6);
    let dir = tempfile::tempdir().unwrap();
    let paths = write_flowcharts(dir.path(), &ws).unwrap();
    assert_eq!(paths.len(), 6);
    for (p, w) in paths.iter().zip(&ws) {
        assert_eq!(p.file_name().unwrap().to_str().unwrap(), format!("{}.mmd", w.paper_id));
        assert_eq!(std::fs::read_to_string(p).unwrap(), render_mermaid(w));
    }
}

fn arb_input() -> impl Strategy<Value = Vec<(String, usize, usize)>> {
    prop::collection::vec(("[a-z\"\\[\\]<>#, ]{1,12}", 0usize..3, 0usize..40), 0..30)
}

proptest! {
    #[test]
    fn structure_invariants(items in arb_input()) {
        let input: Vec<_> = items.iter().map(|(p, s, o)| staged(p, Stage::ALL[*s], *o)).collect();
        let w = assemble("p", &input);
        for steps in &w.stages {
            prop_assert!(steps.windows(2).all(|x| (x[0].ordinal, &x[0].phrase) < (x[1].ordinal, &x[1].phrase)));
        }
        let distinct: std::collections::BTreeSet<&str> = items.iter().map(|(p, _, _)| p.as_str()).collect();
        prop_assert_eq!(w.phrase_count(), distinct.len());
        prop_assert_eq!(assemble("p", &w.flatten()), w.clone());
        let doc = render_mermaid(&w);
        let (nodes, edges) = check_mermaid(&doc).map_err(TestCaseError::fail)?;
        prop_assert_eq!(nodes, w.phrase_count().max(1));
        prop_assert_eq!(edges, expected_edges(&w));
        prop_assert_eq!(doc, render_mermaid(&w.clone()));
    }
}
