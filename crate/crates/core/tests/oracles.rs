//! Fast implementations checked against slow, obviously-correct references.

mod oracle_checks;

macro_rules! oracle_tests {
    ($($name:ident),* $(,)?) => {
        $(
            #[test]
            fn $name() {
                oracle_checks::$name();
            }
        )*
    };
}

oracle_tests!(
    log_odds_matches_sequential_clamped_sum,
    single_and_double_hit_closed_forms,
    dirichlet_mean_closed_form,
    entropy_reference_values,
    traversal_matches_slab_oracle_on_random_rays,
    visibility_equals_explicit_product,
    dbscan_matches_quadratic_oracle,
    tsp_matches_brute_force,
    coverage_matches_all_pairs_scan,
    channel_mi_matches_enumeration,
);
