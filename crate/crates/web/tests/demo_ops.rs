use ssp_core::LossKind;
use ssp_web::demo::{pq_tradeoff, train_alignment, REFERENCE_GALLERY};

#[test]
fn tradeoff_memory_scales_with_subspaces() {
    let t = pq_tradeoff(0, &[2, 8, 32]).unwrap();
    assert_eq!(t.rows.len(), 3);
    // K = 16 gives 4 bits per subspace
    assert_eq!(t.rows.iter().map(|r| r.bytes_per_vector).collect::<Vec<_>>(), [1, 4, 16]);
    assert_eq!(t.rows[2].reference_mib, (REFERENCE_GALLERY * 16) as f64 / (1024.0 * 1024.0));
    assert!(t.rows.iter().all(|r| (0.0..=1.0).contains(&r.map)));
    assert!(t.exact_map > 0.5);
}

#[test]
fn alignment_improves_asymmetric_map() {
    let a = train_alignment(0, 5, LossKind::Ssp).unwrap();
    assert_eq!(a.epoch_losses.len(), 5);
    assert!(a.trained_map > a.untrained_map + 0.2, "{a:?}");
    let json = serde_json::to_value(&a).unwrap();
    assert!(json["trained_map"].is_f64());
}
