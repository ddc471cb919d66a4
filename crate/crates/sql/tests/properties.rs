use lcqa_sql::{like_match, Column, ColumnType, Database, Table, Value};
use proptest::prelude::*;

fn db(rows: &[(i64, i64)]) -> Database {
    let mut t = Table::new(
        "articles",
        vec![
            Column { name: "article_id".into(), ty: ColumnType::Text },
            Column { name: "author_count".into(), ty: ColumnType::Integer },
            Column { name: "reference_count".into(), ty: ColumnType::Integer },
        ],
    )
    .with_key_column("article_id")
    .unwrap();
    for (i, (a, r)) in rows.iter().enumerate() {
        t.push_row(vec![Value::text(format!("id{i:03}")), Value::Int(*a), Value::Int(*r)]).unwrap();
    }
    let mut d = Database::new();
    d.add_table(t);
    d
}

fn scalar(d: &Database, sql: &str) -> Value {
    d.query(sql).unwrap().rows[0][0].clone()
}

proptest! {
    #[test]
    fn like_contains(hay in "[a-zA-Z ]{0,20}", needle in "[a-z]{1,4}") {
        let contains = hay.to_ascii_lowercase().contains(&needle);
        prop_assert_eq!(like_match(&format!("%{needle}%"), &hay), contains);
    }

    #[test]
    fn filter_and_negation_partition_rows(rows in prop::collection::vec((1i64..10, 0i64..60), 1..30), k in 0i64..60) {
        let d = db(&rows);
        let pos = scalar(&d, &format!("SELECT COUNT(*) FROM articles WHERE reference_count > {k}"));
        let neg = scalar(&d, &format!("SELECT COUNT(*) FROM articles WHERE NOT reference_count > {k}"));
        match (pos, neg) {
            (Value::Int(p), Value::Int(n)) => prop_assert_eq!(p + n, rows.len() as i64),
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn order_by_output_is_sorted(rows in prop::collection::vec((1i64..10, 0i64..60), 1..30), desc in any::<bool>()) {
        let d = db(&rows);
        let dir = if desc { "DESC" } else { "ASC" };
        let out = d.query(&format!("SELECT reference_count FROM articles ORDER BY reference_count {dir}")).unwrap();
        let vals: Vec<i64> = out.rows.iter().map(|r| match r[0] { Value::Int(i) => i, _ => unreachable!() }).collect();
        let mut expected: Vec<i64> = rows.iter().map(|r| r.1).collect();
        expected.sort();
        if desc {
            expected.reverse();
        }
        prop_assert_eq!(vals, expected);
        prop_assert!(!out.tie_affected);
    }

    #[test]
    fn group_counts_sum_to_total(rows in prop::collection::vec((1i64..6, 0i64..60), 1..30)) {
        let d = db(&rows);
        let out = d.query("SELECT author_count, COUNT(*) FROM articles GROUP BY author_count").unwrap();
        let total: i64 = out.rows.iter().map(|r| match r[1] { Value::Int(i) => i, _ => 0 }).sum();
        prop_assert_eq!(total, rows.len() as i64);
        let keys: Vec<Value> = out.rows.iter().map(|r| r[0].clone()).collect();
        let mut sorted = keys.clone();
        sorted.sort_by(|a, b| a.sort_cmp(b));
        sorted.dedup();
        prop_assert_eq!(keys, sorted);
    }

    #[test]
    fn sum_matches_direct_fold(rows in prop::collection::vec((1i64..10, 0i64..60), 1..30)) {
        let d = db(&rows);
        let expected: i64 = rows.iter().map(|r| r.0 * 2 + r.1).sum();
        prop_assert_eq!(scalar(&d, "SELECT SUM(author_count * 2 + reference_count) FROM articles"), Value::Int(expected));
    }

    #[test]
    fn query_is_deterministic(rows in prop::collection::vec((1i64..4, 0i64..5), 1..30)) {
        let d = db(&rows);
        let sql = "SELECT article_id, author_count FROM articles ORDER BY reference_count DESC";
        prop_assert_eq!(d.query(sql).unwrap(), d.query(sql).unwrap());
    }
}

#[test]
fn hidden_tie_break_orders_by_key_and_flags_ties() {
    let d = db(&[(2, 5), (1, 5), (3, 7)]);
    let out = d.query("SELECT author_count FROM articles ORDER BY reference_count").unwrap();
    let vals: Vec<String> = out.values().map(|v| v.to_string()).collect();
    assert_eq!(vals, ["2", "1", "3"]);
    assert!(out.tie_affected);

    let same = d.query("SELECT reference_count FROM articles ORDER BY reference_count").unwrap();
    assert!(!same.tie_affected);
}

#[test]
fn bare_column_in_aggregate_query_is_rejected() {
    let d = db(&[(2, 5)]);
    assert!(d.query("SELECT author_count, MAX(reference_count) FROM articles").is_err());
}

#[test]
fn empty_aggregates_are_null() {
    let d = db(&[(2, 5)]);
    let out = d
        .query("SELECT SUM(author_count), AVG(author_count), MAX(author_count), COUNT(*) FROM articles WHERE author_count > 9")
        .unwrap();
    let vals: Vec<String> = out.values().map(|v| v.to_string()).collect();
    assert_eq!(vals, ["NULL", "NULL", "NULL", "0"]);
}

#[test]
fn avg_uses_two_decimals_only_when_fractional() {
    let d = db(&[(2, 5), (3, 6)]);
    assert_eq!(scalar(&d, "SELECT AVG(author_count) FROM articles").to_string(), "2.50");
    assert_eq!(scalar(&d, "SELECT AVG(reference_count * 2) FROM articles").to_string(), "11");
}

#[test]
fn unknown_names_are_errors() {
    let d = db(&[(2, 5)]);
    assert!(d.query("SELECT nope FROM articles").is_err());
    assert!(d.query("SELECT * FROM nope").is_err());
}
