#include <gtest/gtest.h>

#include <random>

#include "coachpipe/goalkit.hpp"
#include "oracles.hpp"

using namespace coachpipe;
using namespace coachpipe::goalkit;
using coachpipe::testing::random_frame;

namespace {

const std::vector<std::string>& day_sets() {
  static const std::vector<std::string> v = {"monday-friday",    "monday,wednesday,friday", "saturday,sunday",
                                             "tuesday",          "tuesday,thursday",        "wednesday-saturday",
                                             "monday-sunday"};
  return v;
}

}  // namespace

TEST(Instruction, ParsesTheClosedSet) {
  EXPECT_EQ(parse_instruction("Copy {Days}"), Instruction::copy(SlotGroup::Days));
  EXPECT_EQ(parse_instruction("  "), Instruction::pass());
  EXPECT_EQ(parse_instruction("\" \""), Instruction::pass());
  EXPECT_EQ(parse_instruction("Pass"), Instruction::pass());
  EXPECT_EQ(parse_instruction("  add   {num} "), Instruction::add(SlotGroup::Num));
  EXPECT_EQ(parse_instruction("COPY{ALL}"), Instruction::copy(SlotGroup::All));
}

TEST(Instruction, RejectsUnknownTokens) {
  try {
    parse_instruction("Copy {Color}");
    FAIL() << "expected UnknownInstructionError";
  } catch (const UnknownInstructionError& e) {
    EXPECT_NE(e.token().find("Color"), std::string::npos);
  }
  EXPECT_THROW(parse_instruction("Delete {Days}"), UnknownInstructionError);
  EXPECT_THROW(parse_instruction("Add {Times}"), UnknownInstructionError);
  EXPECT_THROW(parse_instruction("Copy"), UnknownInstructionError);
  EXPECT_THROW(Instruction::make(Verb::Pass, SlotGroup::Days), UnknownInstructionError);
}

TEST(Instruction, SerializationIsCanonical) {
  ASSERT_EQ(all_instructions().size(), 7u);
  for (const auto& ins : all_instructions()) {
    auto text = to_string(ins);
    EXPECT_EQ(parse_instruction(text), ins);
    EXPECT_EQ(to_string(parse_instruction(text)), text);
  }
  EXPECT_EQ(to_string(parse_instruction(" copy   { times }")), "Copy {Times}");
}

TEST(Extract, HandLabeledExamples) {
  EXPECT_EQ(extract_frame("walk 2 miles a day 7 days a week"),
            (GoalFrame{{"activity", "walk"}, {"amount", "2 miles"}, {"frequency", "a day"}, {"days", "7 days a week"}}));
  EXPECT_EQ(extract_frame("Walk 2,500 steps from Monday to Friday"),
            (GoalFrame{{"activity", "walk"}, {"amount", "2500 steps"}, {"days", "monday-friday"}}));
  EXPECT_TRUE(extract_frame("").empty());
  EXPECT_TRUE(extract_frame("the weather is nice").empty());
}

TEST(Render, TemplateExamples) {
  EXPECT_EQ(render(GoalFrame{{"activity", "walk"}, {"amount", "2500 steps"}, {"days", "monday-friday"}}),
            "walk 2500 steps from monday to friday");
  EXPECT_EQ(render(GoalFrame{}), "");
  EXPECT_EQ(render(GoalFrame{{"activity", "walk"}}), "walk");
}

TEST(Render, RoundTripProperty) {
  std::mt19937_64 rng(2024);
  for (int i = 0; i < 1000; ++i) {
    auto f = random_frame(rng, 0.5);
    ASSERT_EQ(extract_frame(render(f)), f) << render(f);
  }
}

TEST(Render, RoundTripEverySingleLexiconValue) {
  for (const auto& spec : Schema::default_schema().slots())
    for (const auto& v : spec.lexicon) {
      GoalFrame f{{spec.name, v}};
      EXPECT_EQ(extract_frame(render(f)), f) << spec.name << " = " << v;
    }
}

TEST(Execute, CopyDaysWorkedExample) {
  auto r = execute("Walk 2,500 steps", Instruction::copy(SlotGroup::Days), extract_frame("walk Monday to Friday"));
  EXPECT_EQ(r.text, "walk 2500 steps from monday to friday");
  EXPECT_EQ(r.frame, (GoalFrame{{"activity", "walk"}, {"amount", "2500 steps"}, {"days", "monday-friday"}}));
}

TEST(Execute, CopyDaysKeepsPartialAmount) {
  auto r = execute("Walk 3 miles a day", parse_instruction("Copy {Days}"),
                   extract_frame("walk 2 miles a day 7 days a week"));
  EXPECT_NE(r.text.find("3 miles"), std::string::npos);
  EXPECT_NE(r.text.find("7 days a week"), std::string::npos);
}

TEST(Execute, CopyOnlyFillsUnspecifiedSlots) {
  GoalFrame ref{{"activity", "run"}, {"amount", "5000 steps"}, {"times", "7 am"}, {"days", "tuesday"}};
  auto r = execute("walk 3000 steps on monday", Instruction::copy(SlotGroup::Days), ref);
  EXPECT_EQ(*r.frame.get("days"), "monday");
  auto t = execute("walk 3000 steps on monday", Instruction::copy(SlotGroup::Times), ref);
  EXPECT_EQ(*t.frame.get("times"), "7 am");
  EXPECT_EQ(*t.frame.get("amount"), "3000 steps");
  auto n = execute("walk on monday", Instruction::copy(SlotGroup::Num), ref);
  EXPECT_EQ(*n.frame.get("amount"), "5000 steps");
}

TEST(Execute, AddNumSumsCompatibleUnits) {
  auto r = execute("walk 2500 steps", Instruction::add(SlotGroup::Num), GoalFrame{{"amount", "3000 steps"}});
  EXPECT_EQ(*r.frame.get("amount"), "5500 steps");
  auto m = execute("walk 1.5 miles", Instruction::add(SlotGroup::Num), GoalFrame{{"amount", "2 miles"}});
  EXPECT_EQ(*m.frame.get("amount"), "3.5 miles");
  EXPECT_THROW(execute("walk 2 miles", Instruction::add(SlotGroup::Num), GoalFrame{{"amount", "3000 steps"}}),
               UnitMismatchError);
}

TEST(Execute, CopyOfAbsentGroupWarns) {
  auto r = execute("walk 2500 steps", Instruction::copy(SlotGroup::Times), GoalFrame{{"activity", "walk"}});
  EXPECT_EQ(r.frame, extract_frame("walk 2500 steps"));
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Execute, CopyAllOnEmptyPartialRendersReference) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    auto ref = random_frame(rng, 0.6);
    auto r = execute("", Instruction::copy(SlotGroup::All), ref);
    EXPECT_EQ(r.text, render(ref));
  }
}

TEST(Execute, SlotwiseMergeOracle) {
  // Brute-force merge: partial slot wins, else the reference value for slots of the group.
  std::mt19937_64 rng(12);
  for (SlotGroup g : {SlotGroup::Times, SlotGroup::Days, SlotGroup::Num, SlotGroup::All}) {
    auto slots = group_slots(g);
    for (int i = 0; i < 200; ++i) {
      auto p = random_frame(rng, 0.4);
      auto ref = random_frame(rng, 0.6);
      GoalFrame expected = p;
      for (const auto& s : slots)
        if (!p.has(s) && ref.has(s)) expected.set(s, *ref.get(s));
      EXPECT_EQ(execute(render(p), Instruction::copy(g), ref).frame, expected);
    }
  }
}

TEST(Execute, PassIsIdentity) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 1000; ++i) {
    auto p = render(random_frame(rng));
    auto ref = random_frame(rng);
    auto r = execute(p, Instruction::pass(), ref);
    ASSERT_EQ(r.text, p);
    ASSERT_EQ(r.frame, extract_frame(p));
  }
  EXPECT_EQ(execute("Walk 2,500 STEPS!!", Instruction::pass(), {}).text, "Walk 2,500 STEPS!!");
}

TEST(Execute, CopyAllDominance) {
  std::mt19937_64 rng(14);
  for (int i = 0; i < 1000; ++i) {
    auto p = random_frame(rng);
    auto ref = random_frame(rng);
    auto r = execute(render(p), Instruction::copy(SlotGroup::All), ref);
    for (const auto& [k, v] : p.slots()) ASSERT_TRUE(r.frame.has(k)) << k;
    for (const auto& [k, v] : ref.slots()) ASSERT_TRUE(r.frame.has(k)) << k;
  }
}

TEST(Execute, CopyAndPassAreIdempotent) {
  std::mt19937_64 rng(15);
  std::vector<Instruction> set = {Instruction::pass(), Instruction::copy(SlotGroup::Times),
                                  Instruction::copy(SlotGroup::Days), Instruction::copy(SlotGroup::Num),
                                  Instruction::copy(SlotGroup::All)};
  for (int i = 0; i < 300; ++i) {
    auto p = render(random_frame(rng));
    auto ref = random_frame(rng);
    for (const auto& ins : set) {
      auto once = execute(p, ins, ref);
      auto twice = execute(once.text, ins, ref);
      ASSERT_EQ(twice.text, once.text) << to_string(ins);
      ASSERT_EQ(twice.frame, once.frame) << to_string(ins);
    }
  }
}

TEST(Execute, AddDaysUnionIsIdempotentAndCommutative) {
  for (const auto& a : day_sets())
    for (const auto& b : day_sets()) {
      GoalFrame fa{{"activity", "walk"}, {"days", a}};
      GoalFrame fb{{"activity", "walk"}, {"days", b}};
      auto ab = execute(render(fa), Instruction::add(SlotGroup::Days), fb);
      auto ba = execute(render(fb), Instruction::add(SlotGroup::Days), fa);
      EXPECT_EQ(*ab.frame.get("days"), *ba.frame.get("days")) << a << " + " << b;
      EXPECT_EQ(execute(ab.text, Instruction::add(SlotGroup::Days), fb).frame, ab.frame);
    }
  auto r = execute("walk on saturday and sunday", Instruction::add(SlotGroup::Days),
                   GoalFrame{{"days", "monday-friday"}});
  EXPECT_EQ(*r.frame.get("days"), "monday-sunday");
}

TEST(Canonical, NormalizesValues) {
  EXPECT_EQ(canonical_value("days", "Mon-Fri"), "monday-friday");
  EXPECT_EQ(canonical_value("amount", "2,500 Steps"), "2500 steps");
  EXPECT_EQ(canonical_value("notes", "  Bring   WATER "), "bring water");
}

TEST(Schema, JsonRoundTripAndValidation) {
  auto j = Schema::default_schema().to_json();
  auto s = Schema::from_json(j);
  EXPECT_EQ(s.size(), 10u);
  EXPECT_EQ(s.to_json(), j);
  EXPECT_THROW(frame_from_json(nlohmann::json{{"colour", "red"}}), ValidationError);
  EXPECT_THROW(frame_from_json(nlohmann::json{{"amount", 5}}), ValidationError);
  auto f = GoalFrame{{"activity", "walk"}};
  EXPECT_EQ(frame_from_json(frame_to_json(f)), f);
}

TEST(Schema, CustomSlotsAreAnnotations) {
  Schema s({{"activity", {"walk"}}, {"buddy", {"sam"}}});
  GoalFrame f{{"activity", "walk"}, {"buddy", "sam"}};
  EXPECT_EQ(extract_frame(render(f, s), s), f);
  EXPECT_FALSE(Schema::is_builtin("buddy"));
  EXPECT_TRUE(Schema::is_builtin("days"));
}

TEST(Execute, GroupSlotMapping) {
  EXPECT_EQ(group_slots(SlotGroup::Times), std::vector<std::string>{"times"});
  EXPECT_EQ(group_slots(SlotGroup::Days), std::vector<std::string>{"days"});
  EXPECT_EQ(group_slots(SlotGroup::Num), std::vector<std::string>{"amount"});
  EXPECT_EQ(group_slots(SlotGroup::All).size(), Schema::default_schema().size());
}
