//! Binding and evaluation of parsed queries.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::ast::{AggFunc, BinaryOp, Expr, Select, SelectItem};
use crate::error::SqlError;
use crate::table::{Database, ResultTable, Table};
use crate::value::{ArithError, ArithOp, Exact, Value};

/// Expression with column names resolved and subqueries materialized.
#[derive(Debug, Clone)]
enum Bound {
    Lit(Value),
    Col(usize),
    GroupKey(usize),
    Agg(usize),
    Neg(Box<Bound>),
    Not(Box<Bound>),
    Arith(ArithOp, Box<Bound>, Box<Bound>),
    Cmp(BinaryOp, Box<Bound>, Box<Bound>),
    And(Box<Bound>, Box<Bound>),
    Or(Box<Bound>, Box<Bound>),
    Like { expr: Box<Bound>, pattern: Box<Bound>, negated: bool },
    Between { expr: Box<Bound>, low: Box<Bound>, high: Box<Bound>, negated: bool },
    InList { expr: Box<Bound>, list: Vec<Bound>, negated: bool },
    InSet { expr: Box<Bound>, set: Vec<Value>, negated: bool },
}

#[derive(Debug, Clone)]
struct AggSpec {
    func: AggFunc,
    distinct: bool,
    arg: Option<Bound>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Scope {
    /// WHERE clause and aggregate arguments: one row at a time.
    Row,
    /// Select list and ORDER BY of an aggregate query.
    Group,
}

struct Binder<'a> {
    db: &'a Database,
    table: &'a Table,
    qualifier: String,
    group_by: &'a [Expr],
    aggs: Vec<AggSpec>,
}

impl<'a> Binder<'a> {
    fn column(&self, table: &Option<String>, name: &str) -> Result<usize, SqlError> {
        if let Some(t) = table {
            if !t.eq_ignore_ascii_case(&self.qualifier) && !t.eq_ignore_ascii_case(self.table.name()) {
                return Err(SqlError::UnknownColumn(format!("{t}.{name}")));
            }
        }
        self.table.column_index(name).ok_or_else(|| SqlError::UnknownColumn(name.to_string()))
    }

    fn bind(&mut self, e: &Expr, scope: Scope) -> Result<Bound, SqlError> {
        if scope == Scope::Group {
            if let Some(k) = self.group_by.iter().position(|g| g == e) {
                return Ok(Bound::GroupKey(k));
            }
        }
        Ok(match e {
            Expr::Literal(v) => Bound::Lit(v.clone()),
            Expr::Column { table, name } => {
                let idx = self.column(table, name)?;
                if scope == Scope::Group {
                    return Err(SqlError::exec(format!(
                        "column `{name}` must appear in GROUP BY or inside an aggregate"
                    )));
                }
                Bound::Col(idx)
            }
            Expr::Unary { negate, expr } => {
                let inner = self.bind(expr, scope)?;
                if *negate {
                    Bound::Neg(Box::new(inner))
                } else {
                    inner
                }
            }
            Expr::Not(inner) => Bound::Not(Box::new(self.bind(inner, scope)?)),
            Expr::Binary { left, op, right } => {
                let l = Box::new(self.bind(left, scope)?);
                let r = Box::new(self.bind(right, scope)?);
                match op {
                    BinaryOp::Add => Bound::Arith(ArithOp::Add, l, r),
                    BinaryOp::Sub => Bound::Arith(ArithOp::Sub, l, r),
                    BinaryOp::Mul => Bound::Arith(ArithOp::Mul, l, r),
                    BinaryOp::Div => Bound::Arith(ArithOp::Div, l, r),
                    BinaryOp::Rem => Bound::Arith(ArithOp::Rem, l, r),
                    BinaryOp::And => Bound::And(l, r),
                    BinaryOp::Or => Bound::Or(l, r),
                    cmp => Bound::Cmp(*cmp, l, r),
                }
            }
            Expr::Like { expr, pattern, negated } => Bound::Like {
                expr: Box::new(self.bind(expr, scope)?),
                pattern: Box::new(self.bind(pattern, scope)?),
                negated: *negated,
            },
            Expr::Between { expr, low, high, negated } => Bound::Between {
                expr: Box::new(self.bind(expr, scope)?),
                low: Box::new(self.bind(low, scope)?),
                high: Box::new(self.bind(high, scope)?),
                negated: *negated,
            },
            Expr::InList { expr, list, negated } => Bound::InList {
                expr: Box::new(self.bind(expr, scope)?),
                list: list.iter().map(|x| self.bind(x, scope)).collect::<Result<_, _>>()?,
                negated: *negated,
            },
            Expr::InSubquery { expr, query, negated } => {
                let result = execute(self.db, query)?;
                if result.columns.len() != 1 {
                    return Err(SqlError::exec("IN subquery must return exactly one column"));
                }
                let set = result.rows.into_iter().map(|mut r| r.remove(0)).collect();
                Bound::InSet { expr: Box::new(self.bind(expr, scope)?), set, negated: *negated }
            }
            Expr::Aggregate { func, distinct, arg } => {
                if scope == Scope::Row {
                    return Err(SqlError::exec(format!("misuse of aggregate {}()", func.name())));
                }
                let arg = match arg {
                    Some(a) => {
                        if a.contains_aggregate() {
                            return Err(SqlError::exec("nested aggregates are not allowed"));
                        }
                        Some(self.bind(a, Scope::Row)?)
                    }
                    None => None,
                };
                self.aggs.push(AggSpec { func: *func, distinct: *distinct, arg });
                Bound::Agg(self.aggs.len() - 1)
            }
        })
    }
}

/// Evaluation context: either a single row or a group.
struct Ctx<'r> {
    row: Option<&'r [Value]>,
    group_key: &'r [Value],
    aggs: &'r [Value],
}

fn arith_err(e: ArithError) -> SqlError {
    match e {
        ArithError::Overflow => SqlError::exec("integer overflow"),
    }
}

fn eval(b: &Bound, ctx: &Ctx<'_>) -> Result<Value, SqlError> {
    Ok(match b {
        Bound::Lit(v) => v.clone(),
        Bound::Col(i) => ctx.row.map(|r| r[*i].clone()).unwrap_or(Value::Null),
        Bound::GroupKey(i) => ctx.group_key[*i].clone(),
        Bound::Agg(i) => ctx.aggs[*i].clone(),
        Bound::Neg(inner) => eval(inner, ctx)?.negate().map_err(arith_err)?,
        Bound::Not(inner) => Value::from_bool(eval(inner, ctx)?.truth().map(|t| !t)),
        Bound::Arith(op, l, r) => eval(l, ctx)?.arith(*op, &eval(r, ctx)?).map_err(arith_err)?,
        Bound::Cmp(op, l, r) => {
            let (lv, rv) = (eval(l, ctx)?, eval(r, ctx)?);
            Value::from_bool(lv.sql_cmp(&rv).map(|o| cmp_holds(*op, o)))
        }
        Bound::And(l, r) => {
            let lt = eval(l, ctx)?.truth();
            if lt == Some(false) {
                return Ok(Value::Int(0));
            }
            let rt = eval(r, ctx)?.truth();
            Value::from_bool(match (lt, rt) {
                (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            })
        }
        Bound::Or(l, r) => {
            let lt = eval(l, ctx)?.truth();
            if lt == Some(true) {
                return Ok(Value::Int(1));
            }
            let rt = eval(r, ctx)?.truth();
            Value::from_bool(match (lt, rt) {
                (_, Some(true)) => Some(true),
                (Some(false), Some(false)) => Some(false),
                _ => None,
            })
        }
        Bound::Like { expr, pattern, negated } => {
            let (v, p) = (eval(expr, ctx)?, eval(pattern, ctx)?);
            if v.is_null() || p.is_null() {
                Value::Null
            } else {
                Value::from_bool(Some(like_match(&p.to_string(), &v.to_string()) != *negated))
            }
        }
        Bound::Between { expr, low, high, negated } => {
            let v = eval(expr, ctx)?;
            let lo = v.sql_cmp(&eval(low, ctx)?).map(|o| o != Ordering::Less);
            let hi = v.sql_cmp(&eval(high, ctx)?).map(|o| o != Ordering::Greater);
            let inside = match (lo, hi) {
                (Some(false), _) | (_, Some(false)) => Some(false),
                (Some(true), Some(true)) => Some(true),
                _ => None,
            };
            Value::from_bool(inside.map(|i| i != *negated))
        }
        Bound::InList { expr, list, negated } => {
            let v = eval(expr, ctx)?;
            let items = list.iter().map(|x| eval(x, ctx)).collect::<Result<Vec<_>, _>>()?;
            Value::from_bool(membership(&v, &items).map(|m| m != *negated))
        }
        Bound::InSet { expr, set, negated } => {
            let v = eval(expr, ctx)?;
            Value::from_bool(membership(&v, set).map(|m| m != *negated))
        }
    })
}

fn cmp_holds(op: BinaryOp, o: Ordering) -> bool {
    match op {
        BinaryOp::Eq => o == Ordering::Equal,
        BinaryOp::NotEq => o != Ordering::Equal,
        BinaryOp::Lt => o == Ordering::Less,
        BinaryOp::Gt => o == Ordering::Greater,
        BinaryOp::LtEq => o != Ordering::Greater,
        BinaryOp::GtEq => o != Ordering::Less,
        _ => unreachable!("not a comparison operator"),
    }
}

fn membership(v: &Value, items: &[Value]) -> Option<bool> {
    if v.is_null() {
        return if items.is_empty() { Some(false) } else { None };
    }
    let mut saw_null = false;
    for item in items {
        match v.sql_cmp(item) {
            Some(Ordering::Equal) => return Some(true),
            None => saw_null = true,
            _ => {}
        }
    }
    if saw_null {
        None
    } else {
        Some(false)
    }
}

/// `LIKE` with `%` and `_` wildcards, case-insensitive for ASCII letters only.
pub fn like_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().map(|c| c.to_ascii_lowercase()).collect();
    let t: Vec<char> = text.chars().map(|c| c.to_ascii_lowercase()).collect();
    let (mut pi, mut ti) = (0usize, 0usize);
    let mut backtrack: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == '%' {
            backtrack = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && (p[pi] == '_' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if let Some((bp, bt)) = backtrack {
            pi = bp + 1;
            ti = bt + 1;
            backtrack = Some((bp, bt + 1));
        } else {
            return false;
        }
    }
    while pi < p.len() && p[pi] == '%' {
        pi += 1;
    }
    pi == p.len()
}

/// Lexicographic key using the engine's total value order.
#[derive(Debug, Clone)]
struct Key(Vec<Value>);

impl PartialEq for Key {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        for (a, b) in self.0.iter().zip(&other.0) {
            match a.sort_cmp(b) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

fn compute_aggregate(spec: &AggSpec, rows: &[&[Value]]) -> Result<Value, SqlError> {
    let mut values: Vec<Value> = Vec::with_capacity(rows.len());
    match &spec.arg {
        None => return Ok(Value::Int(rows.len() as i64)),
        Some(arg) => {
            for r in rows {
                let v = eval(arg, &Ctx { row: Some(r), group_key: &[], aggs: &[] })?;
                if !v.is_null() {
                    values.push(v);
                }
            }
        }
    }
    if spec.distinct {
        let mut seen = std::collections::BTreeSet::new();
        values.retain(|v| seen.insert(Key(vec![v.clone()])));
    }
    Ok(match spec.func {
        AggFunc::Count => Value::Int(values.len() as i64),
        AggFunc::Min => values.into_iter().min_by(|a, b| a.sort_cmp(b)).unwrap_or(Value::Null),
        AggFunc::Max => values
            .into_iter()
            .reduce(|a, b| if b.sort_cmp(&a) == Ordering::Greater { b } else { a })
            .unwrap_or(Value::Null),
        AggFunc::Sum => {
            let mut acc: Option<Value> = None;
            for v in &values {
                let v = numeric_sum_operand(v);
                acc = Some(match acc {
                    None => v,
                    Some(a) => a.arith(ArithOp::Add, &v).map_err(arith_err)?,
                });
            }
            acc.unwrap_or(Value::Null)
        }
        AggFunc::Avg => {
            if values.is_empty() {
                Value::Null
            } else {
                let mut total = Exact::from_integer(0);
                for v in &values {
                    let x = match numeric_sum_operand(v) {
                        Value::Int(i) => Exact::from_integer(i),
                        Value::Num(r) => r,
                        _ => Exact::from_integer(0),
                    };
                    total = num_traits::CheckedAdd::checked_add(&total, &x)
                        .ok_or_else(|| SqlError::exec("overflow in AVG"))?;
                }
                Value::Num(total / Exact::from_integer(values.len() as i64))
            }
        }
    })
}

fn numeric_sum_operand(v: &Value) -> Value {
    match v {
        Value::Text(_) => v.arith(ArithOp::Add, &Value::Int(0)).unwrap_or(Value::Int(0)),
        other => other.clone(),
    }
}

struct OutRow {
    values: Vec<Value>,
    order: Vec<Value>,
    tiebreak: Key,
}

enum OrderSource {
    Output(usize),
    Expr(Bound),
}

pub(crate) fn execute(db: &Database, q: &Select) -> Result<ResultTable, SqlError> {
    let table = db.table(&q.from.name).ok_or_else(|| SqlError::UnknownTable(q.from.name.clone()))?;
    let mut binder = Binder {
        db,
        table,
        qualifier: q.from.alias.clone().unwrap_or_else(|| q.from.name.clone()),
        group_by: &q.group_by,
        aggs: Vec::new(),
    };

    let has_agg = q.items.iter().any(|i| matches!(i, SelectItem::Expr { expr, .. } if expr.contains_aggregate()))
        || q.order_by.iter().any(|o| o.expr.contains_aggregate());
    let grouped = has_agg || !q.group_by.is_empty();
    let scope = if grouped { Scope::Group } else { Scope::Row };

    let filter = q.filter.as_ref().map(|f| binder.bind(f, Scope::Row)).transpose()?;
    let group_exprs = q.group_by.iter().map(|g| binder.bind(g, Scope::Row)).collect::<Result<Vec<_>, _>>()?;
    if q.group_by.iter().any(|g| g.contains_aggregate()) {
        return Err(SqlError::exec("aggregate functions are not allowed in GROUP BY"));
    }

    let mut columns = Vec::new();
    let mut projections = Vec::new();
    for item in &q.items {
        match item {
            SelectItem::Wildcard => {
                if grouped {
                    return Err(SqlError::exec("`*` cannot be combined with aggregation"));
                }
                for (i, c) in table.columns().iter().enumerate() {
                    columns.push(c.name.clone());
                    projections.push(Bound::Col(i));
                }
            }
            SelectItem::Expr { expr, alias } => {
                columns.push(alias.clone().unwrap_or_else(|| expr.to_string()));
                projections.push(binder.bind(expr, scope)?);
            }
        }
    }

    let mut order_sources = Vec::new();
    for term in &q.order_by {
        let src =
            match &term.expr {
                Expr::Literal(Value::Int(k)) => {
                    let k = *k;
                    if k < 1 || k as usize > projections.len() {
                        return Err(SqlError::exec(format!("ORDER BY term {k} out of range")));
                    }
                    OrderSource::Output(k as usize - 1)
                }
                Expr::Column { table: None, name } => {
                    match q.items.iter().position(
                        |i| matches!(i, SelectItem::Expr { alias: Some(a), .. } if a.eq_ignore_ascii_case(name)),
                    ) {
                        Some(i) if table.column_index(name).is_none() || grouped => OrderSource::Output(i),
                        _ => OrderSource::Expr(binder.bind(&term.expr, scope)?),
                    }
                }
                other => OrderSource::Expr(binder.bind(other, scope)?),
            };
        order_sources.push(src);
    }
    let aggs = std::mem::take(&mut binder.aggs);

    let mut selected: Vec<(usize, &[Value])> = Vec::new();
    for (i, row) in table.rows().iter().enumerate() {
        let keep = match &filter {
            Some(f) => eval(f, &Ctx { row: Some(row), group_key: &[], aggs: &[] })?.truth() == Some(true),
            None => true,
        };
        if keep {
            selected.push((i, row.as_slice()));
        }
    }

    let mut out: Vec<OutRow> = Vec::new();
    let build = |ctx: &Ctx<'_>, tiebreak: Key| -> Result<OutRow, SqlError> {
        let values = projections.iter().map(|p| eval(p, ctx)).collect::<Result<Vec<_>, _>>()?;
        let order = order_sources
            .iter()
            .map(|s| match s {
                OrderSource::Output(i) => Ok(values[*i].clone()),
                OrderSource::Expr(b) => eval(b, ctx),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(OutRow { values, order, tiebreak })
    };

    if grouped {
        let mut groups: BTreeMap<Key, Vec<&[Value]>> = BTreeMap::new();
        if group_exprs.is_empty() {
            groups.insert(Key(Vec::new()), selected.iter().map(|(_, r)| *r).collect());
        } else {
            for (_, row) in &selected {
                let ctx = Ctx { row: Some(row), group_key: &[], aggs: &[] };
                let key = group_exprs.iter().map(|g| eval(g, &ctx)).collect::<Result<Vec<_>, _>>()?;
                groups.entry(Key(key)).or_default().push(row);
            }
        }
        for (key, rows) in &groups {
            let agg_values = aggs.iter().map(|a| compute_aggregate(a, rows)).collect::<Result<Vec<_>, _>>()?;
            let ctx = Ctx { row: rows.first().copied(), group_key: &key.0, aggs: &agg_values };
            out.push(build(&ctx, key.clone())?);
        }
    } else {
        for (i, row) in &selected {
            let ctx = Ctx { row: Some(row), group_key: &[], aggs: &[] };
            let mut tb = Vec::with_capacity(2);
            if let Some(k) = table.key_column() {
                tb.push(row[k].clone());
            }
            tb.push(Value::Int(*i as i64));
            out.push(build(&ctx, Key(tb))?);
        }
    }

    let mut tie_affected = false;
    if !q.order_by.is_empty() {
        let directions: Vec<bool> = q.order_by.iter().map(|o| o.descending).collect();
        let visible_cmp = |a: &OutRow, b: &OutRow| -> Ordering {
            for ((x, y), desc) in a.order.iter().zip(&b.order).zip(&directions) {
                let o = x.sort_cmp(y);
                let o = if *desc { o.reverse() } else { o };
                if o != Ordering::Equal {
                    return o;
                }
            }
            Ordering::Equal
        };
        out.sort_by(|a, b| visible_cmp(a, b).then_with(|| a.tiebreak.cmp(&b.tiebreak)));
        if q.distinct {
            dedup_rows(&mut out);
        }
        tie_affected = out.windows(2).any(|w| {
            visible_cmp(&w[0], &w[1]) == Ordering::Equal && Key(w[0].values.clone()) != Key(w[1].values.clone())
        });
    } else if q.distinct {
        dedup_rows(&mut out);
    }

    Ok(ResultTable { columns, rows: out.into_iter().map(|r| r.values).collect(), tie_affected })
}

fn dedup_rows(rows: &mut Vec<OutRow>) {
    let mut seen = std::collections::BTreeSet::new();
    rows.retain(|r| seen.insert(Key(r.values.clone())));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn like_wildcards() {
        assert!(like_match("%graph%", "Graph-based summarization"));
        assert!(like_match("a_c", "ABC"));
        assert!(!like_match("a_c", "abbc"));
        assert!(like_match("%", ""));
        assert!(like_match("%a%b%", "xxaxxbxx"));
        assert!(!like_match("%a%b", "xxaxxbxx"));
        // Non-ASCII letters are not case-folded.
        assert!(!like_match("é", "É"));
    }
}
