use super::lexer::{tokenize, Tok, Token};
use super::{
    Aggregate, AggregateFunction, AlgorithmAst, CompareOp, DslError, DslErrorKind, Literal, Operand, ParamType,
    Parameter, Predicate,
};
use crate::schema::{DataSchema, SemanticType};
use rust_decimal::Decimal;
use std::str::FromStr;

/// Words that would only make sense in a language able to emit raw values.
const PROJECTION_WORDS: &[&str] = &["select", "project", "values", "rows", "raw", "list", "collect", "first", "last"];

/// Parses and validates `source` against `schema`.
pub fn parse(source: &str, schema: &DataSchema) -> Result<AlgorithmAst, DslError> {
    let tokens = tokenize(source)?;
    let mut p = Parser { tokens, pos: 0 };
    let ast = p.program()?;
    Validator { schema, ast: &ast }.run()?;
    Ok(ast.into_ast())
}

/// Parsed program with source positions kept for validation errors.
struct Located {
    parameters: Vec<(Parameter, Pos)>,
    filter: Option<LPredicate>,
    group_by: Vec<(String, Pos)>,
    aggregates: Vec<(Aggregate, Pos)>,
}

#[derive(Clone, Copy)]
struct Pos(usize, usize);

enum LPredicate {
    Compare { column: String, op: CompareOp, operand: Operand, pos: Pos },
    And(Box<LPredicate>, Box<LPredicate>),
    Or(Box<LPredicate>, Box<LPredicate>),
    Not(Box<LPredicate>),
}

impl LPredicate {
    fn strip(self) -> Predicate {
        match self {
            LPredicate::Compare { column, op, operand, .. } => Predicate::Compare { column, op, operand },
            LPredicate::And(a, b) => Predicate::And(Box::new(a.strip()), Box::new(b.strip())),
            LPredicate::Or(a, b) => Predicate::Or(Box::new(a.strip()), Box::new(b.strip())),
            LPredicate::Not(p) => Predicate::Not(Box::new(p.strip())),
        }
    }
}

impl Located {
    fn into_ast(self) -> AlgorithmAst {
        AlgorithmAst {
            parameters: self.parameters.into_iter().map(|(p, _)| p).collect(),
            filter: self.filter.map(LPredicate::strip),
            group_by: self.group_by.into_iter().map(|(g, _)| g).collect(),
            aggregates: self.aggregates.into_iter().map(|(a, _)| a).collect(),
        }
    }
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

fn error(kind: DslErrorKind, pos: Pos) -> DslError {
    DslError { kind, line: pos.0, column: pos.1 }
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos]
    }

    fn here(&self) -> Pos {
        let t = self.peek();
        Pos(t.line, t.column)
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn syntax<T>(&self, msg: impl Into<String>) -> Result<T, DslError> {
        Err(error(DslErrorKind::Syntax(msg.into()), self.here()))
    }

    fn at_keyword(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(w) if w.eq_ignore_ascii_case(kw))
    }

    fn expect_keyword(&mut self, kw: &str) -> Result<(), DslError> {
        if self.at_keyword(kw) {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected `{kw}`, found {}", describe(&self.peek().tok)))
        }
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), DslError> {
        if self.peek().tok == want {
            self.bump();
            Ok(())
        } else {
            self.syntax(format!("expected {what}, found {}", describe(&self.peek().tok)))
        }
    }

    fn ident(&mut self, what: &str) -> Result<(String, Pos), DslError> {
        let pos = self.here();
        match &self.peek().tok {
            Tok::Ident(name) if !is_reserved(name) => {
                let name = name.clone();
                self.bump();
                Ok((name, pos))
            }
            other => self.syntax(format!("expected {what}, found {}", describe(other))),
        }
    }

    fn program(&mut self) -> Result<Located, DslError> {
        if self.at_keyword("select") {
            return Err(error(
                DslErrorKind::RawProjection("SELECT is not part of the language; use AGG".into()),
                self.here(),
            ));
        }
        let mut parameters = Vec::new();
        if self.at_keyword("param") {
            self.bump();
            loop {
                let (name, pos) = self.ident("parameter name")?;
                self.expect(Tok::Colon, "`:`")?;
                let ty_pos = self.here();
                let (ty, _) = self.ident("parameter type")?;
                let param_type = match ty.to_ascii_lowercase().as_str() {
                    "integer" => ParamType::Integer,
                    "decimal" => ParamType::Decimal,
                    "categorical" => ParamType::Categorical,
                    other => {
                        return Err(error(
                            DslErrorKind::Syntax(format!("unknown parameter type `{other}`")),
                            ty_pos,
                        ))
                    }
                };
                parameters.push((Parameter { name, param_type }, pos));
                if self.peek().tok != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        let filter = if self.at_keyword("filter") {
            self.bump();
            Some(self.or_expr()?)
        } else {
            None
        };
        let mut group_by = Vec::new();
        if self.at_keyword("group") {
            self.bump();
            self.expect_keyword("by")?;
            loop {
                group_by.push(self.ident("group-by column")?);
                if self.peek().tok != Tok::Comma {
                    break;
                }
                self.bump();
            }
        }
        self.expect_keyword("agg")?;
        let mut aggregates = Vec::new();
        loop {
            aggregates.push(self.aggregate()?);
            if self.peek().tok != Tok::Comma {
                break;
            }
            self.bump();
        }
        if self.peek().tok != Tok::Eof {
            return self.syntax(format!("unexpected {} after aggregate list", describe(&self.peek().tok)));
        }
        Ok(Located { parameters, filter, group_by, aggregates })
    }

    fn aggregate(&mut self) -> Result<(Aggregate, Pos), DslError> {
        let pos = self.here();
        let name = match &self.peek().tok {
            Tok::Ident(n) => n.clone(),
            other => return self.syntax(format!("expected aggregate function, found {}", describe(other))),
        };
        self.bump();
        if self.peek().tok != Tok::LParen {
            return Err(error(
                DslErrorKind::RawProjection(format!("`{name}` is a bare column; only aggregate functions may appear in AGG")),
                pos,
            ));
        }
        let function = match AggregateFunction::from_name(&name) {
            Some(f) => f,
            None if PROJECTION_WORDS.contains(&name.to_ascii_lowercase().as_str()) => {
                return Err(error(DslErrorKind::RawProjection(format!("`{name}` would emit row values")), pos))
            }
            None => return Err(error(DslErrorKind::UnknownFunction(name), pos)),
        };
        self.bump(); // (
        let column = if self.peek().tok == Tok::RParen { None } else { Some(self.ident("column")?.0) };
        self.expect(Tok::RParen, "`)`")?;
        match (function, &column) {
            (AggregateFunction::Count, Some(_)) => {
                return Err(error(DslErrorKind::Syntax("count() takes no column".into()), pos))
            }
            (f, None) if f != AggregateFunction::Count => {
                return Err(error(DslErrorKind::Syntax(format!("{}() requires a column", f.name())), pos))
            }
            _ => {}
        }
        self.expect_keyword("as")?;
        let (output_name, _) = self.ident("output name")?;
        Ok((Aggregate { output_name, function, column }, pos))
    }

    fn or_expr(&mut self) -> Result<LPredicate, DslError> {
        let mut left = self.and_expr()?;
        while self.at_keyword("or") {
            self.bump();
            let right = self.and_expr()?;
            left = LPredicate::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn and_expr(&mut self) -> Result<LPredicate, DslError> {
        let mut left = self.not_expr()?;
        while self.at_keyword("and") {
            self.bump();
            let right = self.not_expr()?;
            left = LPredicate::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn not_expr(&mut self) -> Result<LPredicate, DslError> {
        if self.at_keyword("not") {
            self.bump();
            return Ok(LPredicate::Not(Box::new(self.not_expr()?)));
        }
        if self.peek().tok == Tok::LParen {
            self.bump();
            let inner = self.or_expr()?;
            self.expect(Tok::RParen, "`)`")?;
            return Ok(inner);
        }
        let (column, pos) = self.ident("column")?;
        let op = match self.peek().tok {
            Tok::Op(op) => op,
            ref other => return self.syntax(format!("expected comparison operator, found {}", describe(other))),
        };
        self.bump();
        let operand_pos = self.here();
        let operand = match self.bump().tok {
            Tok::Number(n) => Operand::Literal(number_literal(&n).ok_or_else(|| {
                error(DslErrorKind::Syntax(format!("numeric literal `{n}` out of range")), operand_pos)
            })?),
            Tok::Str(s) => Operand::Literal(Literal::Text(s)),
            Tok::Param(p) => Operand::Param(p),
            other => {
                return Err(error(
                    DslErrorKind::Syntax(format!("expected literal or $parameter, found {}", describe(&other))),
                    operand_pos,
                ))
            }
        };
        Ok(LPredicate::Compare { column, op, operand, pos })
    }
}

fn number_literal(text: &str) -> Option<Literal> {
    if text.contains('.') {
        Decimal::from_str(text).ok().map(Literal::Decimal)
    } else {
        text.parse().ok().map(Literal::Integer)
    }
}

fn is_reserved(word: &str) -> bool {
    ["param", "filter", "group", "by", "agg", "as", "and", "or", "not"]
        .iter()
        .any(|k| k.eq_ignore_ascii_case(word))
}

fn describe(tok: &Tok) -> String {
    match tok {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Number(n) => format!("number `{n}`"),
        Tok::Str(_) => "string literal".into(),
        Tok::Param(p) => format!("`${p}`"),
        Tok::Op(op) => format!("`{}`", op.symbol()),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::Comma => "`,`".into(),
        Tok::Colon => "`:`".into(),
        Tok::Eof => "end of input".into(),
    }
}

struct Validator<'a> {
    schema: &'a DataSchema,
    ast: &'a Located,
}

impl Validator<'_> {
    fn run(&self) -> Result<(), DslError> {
        for (i, (p, pos)) in self.ast.parameters.iter().enumerate() {
            if self.ast.parameters[..i].iter().any(|(q, _)| q.name == p.name) {
                return Err(error(DslErrorKind::DuplicateName(p.name.clone()), *pos));
            }
        }
        if let Some(f) = &self.ast.filter {
            self.predicate(f)?;
        }
        for (i, (g, pos)) in self.ast.group_by.iter().enumerate() {
            let ty = self.column(g, *pos)?;
            if ty != SemanticType::Categorical {
                return Err(error(
                    DslErrorKind::TypeMismatch(format!("GROUP BY requires a categorical column, `{g}` is {ty}")),
                    *pos,
                ));
            }
            if self.ast.group_by[..i].iter().any(|(h, _)| h == g) {
                return Err(error(DslErrorKind::DuplicateName(g.clone()), *pos));
            }
        }
        for (i, (a, pos)) in self.ast.aggregates.iter().enumerate() {
            if self.ast.aggregates[..i].iter().any(|(b, _)| b.output_name == a.output_name) {
                return Err(error(DslErrorKind::DuplicateName(a.output_name.clone()), *pos));
            }
            let Some(col) = &a.column else { continue };
            let ty = self.column(col, *pos)?;
            let ok = match a.function {
                AggregateFunction::Histogram => ty == SemanticType::Categorical,
                AggregateFunction::Count => true,
                _ => ty.is_numeric(),
            };
            if !ok {
                return Err(error(
                    DslErrorKind::TypeMismatch(format!("{}() cannot be applied to {ty} column `{col}`", a.function.name())),
                    *pos,
                ));
            }
        }
        Ok(())
    }

    fn column(&self, name: &str, pos: Pos) -> Result<SemanticType, DslError> {
        let spec = self.schema.get(name).ok_or_else(|| error(DslErrorKind::UnknownColumn(name.into()), pos))?;
        if spec.semantic_type == SemanticType::SubjectId {
            return Err(error(DslErrorKind::SubjectIdReference(name.into()), pos));
        }
        Ok(spec.semantic_type)
    }

    fn predicate(&self, p: &LPredicate) -> Result<(), DslError> {
        match p {
            LPredicate::And(a, b) | LPredicate::Or(a, b) => {
                self.predicate(a)?;
                self.predicate(b)
            }
            LPredicate::Not(inner) => self.predicate(inner),
            LPredicate::Compare { column, op, operand, pos } => {
                let ty = self.column(column, *pos)?;
                let operand_ty = match operand {
                    Operand::Literal(Literal::Integer(_)) => ParamType::Integer,
                    Operand::Literal(Literal::Decimal(_)) => ParamType::Decimal,
                    Operand::Literal(Literal::Text(_)) => ParamType::Categorical,
                    Operand::Param(name) => self
                        .ast
                        .parameters
                        .iter()
                        .find(|(q, _)| &q.name == name)
                        .map(|(q, _)| q.param_type)
                        .ok_or_else(|| error(DslErrorKind::UnknownParameter(name.clone()), *pos))?,
                };
                let compatible = match ty {
                    SemanticType::Integer | SemanticType::Decimal => operand_ty != ParamType::Categorical,
                    SemanticType::Categorical => operand_ty == ParamType::Categorical,
                    SemanticType::SubjectId => false,
                };
                if !compatible {
                    return Err(error(
                        DslErrorKind::TypeMismatch(format!(
                            "cannot compare {ty} column `{column}` with a {} value",
                            operand_ty.as_str()
                        )),
                        *pos,
                    ));
                }
                if ty == SemanticType::Categorical && !matches!(op, CompareOp::Eq | CompareOp::Ne) {
                    return Err(error(
                        DslErrorKind::TypeMismatch(format!(
                            "categorical column `{column}` only supports = and !="
                        )),
                        *pos,
                    ));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::ColumnSpec;
    use std::collections::BTreeSet;

    fn schema() -> DataSchema {
        DataSchema::new(vec![
            ColumnSpec::new("subject_id", SemanticType::SubjectId),
            ColumnSpec::new("age", SemanticType::Integer),
            ColumnSpec::new("spend", SemanticType::Decimal),
            ColumnSpec::new("city", SemanticType::Categorical),
            ColumnSpec::new("name", SemanticType::Categorical),
        ])
        .unwrap()
    }

    fn kind(src: &str) -> DslErrorKind {
        parse(src, &schema()).unwrap_err().kind
    }

    #[test]
    fn minimal_program() {
        let s = DataSchema::new(vec![
            ColumnSpec::new("subject_id", SemanticType::SubjectId),
            ColumnSpec::new("age", SemanticType::Integer),
        ])
        .unwrap();
        let ast = parse("FILTER age >= 18 AGG count() AS n", &s).unwrap();
        assert_eq!(
            ast.filter(),
            Some(&Predicate::Compare {
                column: "age".into(),
                op: CompareOp::Ge,
                operand: Operand::Literal(Literal::Integer(18))
            })
        );
        assert_eq!(ast.aggregates().len(), 1);
        assert_eq!(ast.aggregates()[0].function, AggregateFunction::Count);
    }

    #[test]
    fn select_is_a_projection_attempt() {
        assert!(matches!(kind("AGG select(name)"), DslErrorKind::RawProjection(_)));
        assert!(matches!(kind("SELECT name AGG count() AS n"), DslErrorKind::RawProjection(_)));
        assert!(matches!(kind("AGG spend AS s"), DslErrorKind::RawProjection(_)));
    }

    #[test]
    fn referenced_columns() {
        let ast = parse("GROUP BY city AGG mean(spend) AS m", &schema()).unwrap();
        assert_eq!(ast.referenced_columns(), BTreeSet::from(["city".to_string(), "spend".to_string()]));
    }

    #[test]
    fn subject_id_is_untouchable() {
        assert!(matches!(kind("FILTER subject_id = 'x' AGG count() AS n"), DslErrorKind::SubjectIdReference(_)));
        assert!(matches!(kind("GROUP BY subject_id AGG count() AS n"), DslErrorKind::SubjectIdReference(_)));
        assert!(matches!(kind("AGG histogram(subject_id) AS h"), DslErrorKind::SubjectIdReference(_)));
    }

    #[test]
    fn type_rules() {
        assert!(matches!(kind("GROUP BY age AGG count() AS n"), DslErrorKind::TypeMismatch(_)));
        assert!(matches!(kind("AGG sum(city) AS s"), DslErrorKind::TypeMismatch(_)));
        assert!(matches!(kind("AGG histogram(age) AS h"), DslErrorKind::TypeMismatch(_)));
        assert!(matches!(kind("FILTER age = 'old' AGG count() AS n"), DslErrorKind::TypeMismatch(_)));
        assert!(matches!(kind("FILTER city < 'M' AGG count() AS n"), DslErrorKind::TypeMismatch(_)));
        assert!(parse("FILTER spend > 2 AND age < 3.5 AGG count() AS n", &schema()).is_ok());
    }

    #[test]
    fn unknown_things() {
        assert_eq!(kind("AGG sum(height) AS s"), DslErrorKind::UnknownColumn("height".into()));
        assert_eq!(kind("AGG median(age) AS s"), DslErrorKind::UnknownFunction("median".into()));
        assert_eq!(kind("FILTER age > $x AGG count() AS n"), DslErrorKind::UnknownParameter("x".into()));
    }

    #[test]
    fn parameters_bind_types() {
        let ast = parse(
            "PARAM min_age: integer, c: categorical\nFILTER age >= $min_age AND city = $c\nAGG count() AS n",
            &schema(),
        )
        .unwrap();
        assert_eq!(ast.parameters().len(), 2);
        assert!(matches!(
            kind("PARAM c: categorical FILTER age > $c AGG count() AS n"),
            DslErrorKind::TypeMismatch(_)
        ));
    }

    #[test]
    fn duplicate_output_names() {
        assert_eq!(kind("AGG count() AS n, sum(age) AS n"), DslErrorKind::DuplicateName("n".into()));
    }

    #[test]
    fn error_positions() {
        let err = parse("FILTER age >= 18\nAGG sum(nope) AS s", &schema()).unwrap_err();
        assert_eq!((err.line, err.column), (2, 5));
        assert_eq!(err.to_string(), "2:5: unknown column `nope`");
    }

    #[test]
    fn precedence_and_parens() {
        let ast = parse("FILTER NOT age > 1 OR age < 0 AND (city = 'a' OR city = 'b') AGG count() AS n", &schema()).unwrap();
        match ast.filter().unwrap() {
            Predicate::Or(left, right) => {
                assert!(matches!(**left, Predicate::Not(_)));
                assert!(matches!(**right, Predicate::And(_, _)));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn keywords_are_case_insensitive() {
        assert!(parse("filter age >= 18 group by city agg count() as n", &schema()).is_ok());
    }

    #[test]
    fn trailing_garbage() {
        assert!(matches!(kind("AGG count() AS n FILTER age > 1"), DslErrorKind::Syntax(_)));
        assert!(matches!(kind("FILTER age > 1"), DslErrorKind::Syntax(_)));
    }
}
