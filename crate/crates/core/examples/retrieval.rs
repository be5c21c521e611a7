//! Retrieval metrics on a toy gallery, with and without moving the query's
//! predicted class to the front.

use finrot::mvnet::retrieval::{evaluate_retrieval, Query, RetrievalIndex};

fn main() -> finrot::Result<()> {
    let descriptors = vec![
        vec![1.0, 0.1, 0.0],
        vec![0.9, 0.3, 0.1],
        vec![0.2, 1.0, 0.0],
        vec![0.1, 0.9, 0.4],
        vec![0.7, 0.7, 0.0],
        vec![0.0, 0.2, 1.0],
    ];
    let labels = vec![0, 0, 1, 1, 0, 2];
    let predicted = vec![0, 0, 1, 1, 1, 2];
    let index = RetrievalIndex::new(&descriptors, labels.clone(), predicted.clone())?;
    let queries: Vec<Query> = (0..descriptors.len())
        .map(|i| Query { descriptor: descriptors[i].clone(), label: labels[i], predicted: predicted[i], exclude: Some(i) })
        .collect();

    // item 4 is misclassified: reranking pulls class-1 predictions ahead of its true neighbours
    println!("ranking for item 4: {:?}", index.rank(&queries[4], false)?);
    println!("reranked:           {:?}", index.rank(&queries[4], true)?);
    for rerank in [false, true] {
        let m = evaluate_retrieval(&index, &queries, rerank)?;
        println!(
            "rerank {rerank:<5}  mAP {:.3} (macro {:.3})  P@N {:.3}  R@N {:.3}  F1@N {:.3}",
            m.map_micro, m.map_macro, m.p_at_n, m.r_at_n, m.f1_at_n
        );
    }
    Ok(())
}
